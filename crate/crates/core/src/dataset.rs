//! Patient cohort ingestion: CSV parsing, WCDA feature encoding, dose
//! bucketization and seeded shuffling.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing mandatory columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("dose must be positive, got {0}")]
    NonPositiveDose(f64),
}

/// Weekly dose thresholds (mg/week) separating low, medium and high.
pub const LOW_DOSE_UPPER: f64 = 21.0;
pub const HIGH_DOSE_LOWER: f64 = 49.0;

/// Discretized dose level; doubles as the arm index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DoseLevel(u8);

impl DoseLevel {
    pub const LOW: DoseLevel = DoseLevel(0);
    pub const MEDIUM: DoseLevel = DoseLevel(1);
    pub const HIGH: DoseLevel = DoseLevel(2);
    pub const ALL: [DoseLevel; 3] = [Self::LOW, Self::MEDIUM, Self::HIGH];

    pub fn new(level: u8) -> Option<Self> {
        (level < 3).then_some(DoseLevel(level))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DoseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            0 => "low",
            1 => "medium",
            _ => "high",
        })
    }
}

/// `[0, 21)` low, `[21, 49]` medium, `(49, ∞)` high.
pub fn bucketize_dose(dose_mg_week: f64) -> Result<DoseLevel, DatasetError> {
    if !(dose_mg_week > 0.0) {
        return Err(DatasetError::NonPositiveDose(dose_mg_week));
    }
    Ok(if dose_mg_week < LOW_DOSE_UPPER {
        DoseLevel::LOW
    } else if dose_mg_week <= HIGH_DOSE_LOWER {
        DoseLevel::MEDIUM
    } else {
        DoseLevel::HIGH
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    Asian,
    BlackAfricanAmerican,
    MissingOrMixed,
    WhiteOther,
}

impl Race {
    pub fn parse(raw: &str) -> Race {
        let s = raw.trim().to_ascii_lowercase();
        if s.is_empty() {
            Race::MissingOrMixed
        } else if s == "asian" {
            Race::Asian
        } else if s.starts_with("black") || s.contains("african") {
            Race::BlackAfricanAmerican
        } else if s == "white" || s == "caucasian" {
            Race::WhiteOther
        } else {
            Race::MissingOrMixed
        }
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Race::Asian => "asian",
            Race::BlackAfricanAmerican => "black_african_american",
            Race::MissingOrMixed => "missing_or_mixed",
            Race::WhiteOther => "white_other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Missing,
}

impl Gender {
    pub fn parse(raw: &str) -> Gender {
        match raw.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Gender::Female,
            "male" | "m" => Gender::Male,
            _ => Gender::Missing,
        }
    }
}

/// One parsed row. Unparseable cells are `None`, never an error.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub age_decade: Option<u8>,
    pub height_cm: Option<f64>,
    pub weight_kg: Option<f64>,
    pub race: Race,
    /// Any of carbamazepine, phenytoin or rifampin taken. `None` only when
    /// all three cells are blank.
    pub enzyme_inducer: Option<bool>,
    pub amiodarone: Option<bool>,
    pub gender: Gender,
    pub therapeutic_dose_mg_week: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// `[1, age_decade, height, weight, asian, black, missing_or_mixed,
    /// enzyme_inducer, amiodarone]`
    #[default]
    Wcda9,
    /// WCDA9 followed by `[female, male]`.
    Wcda11,
}

impl FeatureSet {
    pub fn dim(self) -> usize {
        match self {
            FeatureSet::Wcda9 => 9,
            FeatureSet::Wcda11 => 11,
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Wcda9 => "wcda9",
            FeatureSet::Wcda11 => "wcda11",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPatient {
    /// Position of the source row in the parsed file.
    pub row: usize,
    pub id: String,
    pub features: Vec<f64>,
    pub true_dose_mg_week: f64,
    pub true_level: DoseLevel,
}

/// Logical field → column header. Defaults follow the public PharmGKB
/// warfarin export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub id: String,
    pub age: String,
    pub height: String,
    pub weight: String,
    pub race: String,
    pub carbamazepine: String,
    pub phenytoin: String,
    pub rifampin: String,
    pub amiodarone: String,
    pub gender: String,
    pub dose: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            id: "PharmGKB Subject ID".into(),
            age: "Age".into(),
            height: "Height (cm)".into(),
            weight: "Weight (kg)".into(),
            race: "Race".into(),
            carbamazepine: "Carbamazepine (Tegretol)".into(),
            phenytoin: "Phenytoin (Dilantin)".into(),
            rifampin: "Rifampin or Rifampicin".into(),
            amiodarone: "Amiodarone (Cordarone)".into(),
            gender: "Gender".into(),
            dose: "Therapeutic Dose of Warfarin".into(),
        }
    }
}

impl ColumnSchema {
    fn mandatory(&self) -> [&str; 5] {
        [&self.age, &self.height, &self.weight, &self.race, &self.dose]
    }
}

/// Parses an age cell into a decade in `1..=9`.
///
/// Accepts bracket text (`"50 - 59"`), the capped bracket (`"90+"`) and bare
/// ages in years.
pub fn age_to_decade(raw: &str) -> Option<u8> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    let lead: String = s
        .chars()
        .skip_while(|c| c.is_whitespace())
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    let years: f64 = lead.parse().ok()?;
    let rest = s[lead.len()..].trim_start();
    if !(rest.is_empty() || rest.starts_with('-') || rest.starts_with('+')) {
        return None;
    }
    let decade = (years / 10.0).floor();
    if !(1.0..).contains(&decade) {
        return None;
    }
    Some(decade.min(9.0) as u8)
}

fn parse_positive(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0)
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" | "y" => Some(true),
        "0" | "0.0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Any affirmative flag wins; otherwise any explicit negative; otherwise
/// missing.
fn any_taken(flags: &[Option<bool>]) -> Option<bool> {
    if flags.contains(&Some(true)) {
        Some(true)
    } else if flags.contains(&Some(false)) {
        Some(false)
    } else {
        None
    }
}

pub fn parse_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Vec<PatientRecord>, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_reader(file, schema)
}

pub fn parse_reader<R: std::io::Read>(reader: R, schema: &ColumnSchema) -> Result<Vec<PatientRecord>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .byte_headers()?
        .iter()
        .map(|h| String::from_utf8_lossy(h).trim().to_string())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let missing: Vec<String> = schema
        .mandatory()
        .iter()
        .filter(|name| col(name).is_none())
        .map(|name| name.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingColumns(missing));
    }

    let idx = |name: &str| col(name);
    let (id_c, age_c, height_c, weight_c, race_c) =
        (idx(&schema.id), idx(&schema.age), idx(&schema.height), idx(&schema.weight), idx(&schema.race));
    let (carb_c, phen_c, rif_c, amio_c, gender_c, dose_c) = (
        idx(&schema.carbamazepine),
        idx(&schema.phenytoin),
        idx(&schema.rifampin),
        idx(&schema.amiodarone),
        idx(&schema.gender),
        idx(&schema.dose),
    );

    let mut records = Vec::new();
    for (row, result) in rdr.byte_records().enumerate() {
        let rec = result?;
        let cell = |c: Option<usize>| -> String {
            c.and_then(|i| rec.get(i))
                .map(|b| String::from_utf8_lossy(b).into_owned())
                .unwrap_or_default()
        };
        let id = match id_c {
            Some(_) if !cell(id_c).trim().is_empty() => cell(id_c).trim().to_string(),
            _ => format!("row-{row}"),
        };
        records.push(PatientRecord {
            id,
            age_decade: age_to_decade(&cell(age_c)),
            height_cm: parse_positive(&cell(height_c)),
            weight_kg: parse_positive(&cell(weight_c)),
            race: Race::parse(&cell(race_c)),
            enzyme_inducer: any_taken(&[
                parse_flag(&cell(carb_c)),
                parse_flag(&cell(phen_c)),
                parse_flag(&cell(rif_c)),
            ]),
            amiodarone: parse_flag(&cell(amio_c)),
            gender: Gender::parse(&cell(gender_c)),
            therapeutic_dose_mg_week: parse_positive(&cell(dose_c)),
        });
    }
    Ok(records)
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// The nine WCDA covariates in their fixed order, or `None` if a required
/// field is missing. Drug flags that are missing count as not taken.
pub fn wcda_covariates(rec: &PatientRecord) -> Option<[f64; 9]> {
    let age = rec.age_decade?;
    let height = rec.height_cm?;
    let weight = rec.weight_kg?;
    Some([
        1.0,
        f64::from(age),
        height,
        weight,
        indicator(rec.race == Race::Asian),
        indicator(rec.race == Race::BlackAfricanAmerican),
        indicator(rec.race == Race::MissingOrMixed),
        indicator(rec.enzyme_inducer.unwrap_or(false)),
        indicator(rec.amiodarone.unwrap_or(false)),
    ])
}

pub fn encode_features(rec: &PatientRecord, set: FeatureSet) -> Option<EncodedPatient> {
    let covariates = wcda_covariates(rec)?;
    let dose = rec.therapeutic_dose_mg_week?;
    let true_level = bucketize_dose(dose).ok()?;
    let mut features = covariates.to_vec();
    if set == FeatureSet::Wcda11 {
        features.push(indicator(rec.gender == Gender::Female));
        features.push(indicator(rec.gender == Gender::Male));
    }
    Some(EncodedPatient {
        row: 0,
        id: rec.id.clone(),
        features,
        true_dose_mg_week: dose,
        true_level,
    })
}

/// Keeps the records that encode completely, in input order.
pub fn filter_cohort(records: &[PatientRecord], set: FeatureSet) -> Vec<EncodedPatient> {
    records
        .iter()
        .enumerate()
        .filter_map(|(row, rec)| {
            encode_features(rec, set).map(|mut p| {
                p.row = row;
                p
            })
        })
        .collect()
}

/// Seeded permutation. ChaCha8 plus `rand`'s Fisher–Yates gives the same
/// order on every platform for a given seed.
pub fn shuffle<T: Clone>(cohort: &[T], seed: u64) -> Vec<T> {
    let mut out = cohort.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.shuffle(&mut rng);
    out
}

/// Counts and missing rates reported by `inspect`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub records: usize,
    pub cohort_size: usize,
    pub per_level: BTreeMap<String, usize>,
    pub per_race: BTreeMap<String, usize>,
    pub missing_rate: BTreeMap<String, f64>,
}

impl CohortSummary {
    /// `cohort` must come from `filter_cohort(records, ..)` so that row
    /// indices line up.
    pub fn build(records: &[PatientRecord], cohort: &[EncodedPatient]) -> Self {
        let mut per_level = BTreeMap::new();
        for level in DoseLevel::ALL {
            per_level.insert(level.to_string(), 0);
        }
        for p in cohort {
            *per_level.entry(p.true_level.to_string()).or_default() += 1;
        }
        let mut per_race = BTreeMap::new();
        for rec in cohort.iter().filter_map(|p| records.get(p.row)) {
            *per_race.entry(rec.race.to_string()).or_default() += 1;
        }

        let n = records.len();
        let rate = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
        let mut missing_rate = BTreeMap::new();
        let count = |f: &dyn Fn(&PatientRecord) -> bool| records.iter().filter(|r| f(r)).count();
        missing_rate.insert("age".into(), rate(count(&|r| r.age_decade.is_none())));
        missing_rate.insert("height".into(), rate(count(&|r| r.height_cm.is_none())));
        missing_rate.insert("weight".into(), rate(count(&|r| r.weight_kg.is_none())));
        missing_rate.insert("race".into(), rate(count(&|r| r.race == Race::MissingOrMixed)));
        missing_rate.insert("enzyme_inducer".into(), rate(count(&|r| r.enzyme_inducer.is_none())));
        missing_rate.insert("amiodarone".into(), rate(count(&|r| r.amiodarone.is_none())));
        missing_rate.insert("gender".into(), rate(count(&|r| r.gender == Gender::Missing)));
        missing_rate.insert("dose".into(), rate(count(&|r| r.therapeutic_dose_mg_week.is_none())));

        Self {
            records: n,
            cohort_size: cohort.len(),
            per_level,
            per_race,
            missing_rate,
        }
    }
}

impl fmt::Display for CohortSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records      {}", self.records)?;
        writeln!(f, "cohort size  {}", self.cohort_size)?;
        writeln!(f)?;
        writeln!(f, "{:<24}{:>8}", "dose level", "count")?;
        for (k, v) in &self.per_level {
            writeln!(f, "{k:<24}{v:>8}")?;
        }
        writeln!(f)?;
        writeln!(f, "{:<24}{:>8}", "race (cohort)", "count")?;
        for (k, v) in &self.per_race {
            writeln!(f, "{k:<24}{v:>8}")?;
        }
        writeln!(f)?;
        writeln!(f, "{:<24}{:>8}", "field", "missing")?;
        for (k, v) in &self.missing_rate {
            writeln!(f, "{:<24}{:>7.2}%", k, 100.0 * v)?;
        }
        Ok(())
    }
}
