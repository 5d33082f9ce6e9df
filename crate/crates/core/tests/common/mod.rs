#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const HEADER: &str = "PharmGKB Subject ID,Gender,Race,Ethnicity,Age,Height (cm),Weight (kg),Carbamazepine (Tegretol),Phenytoin (Dilantin),Rifampin or Rifampicin,Amiodarone (Cordarone),Therapeutic Dose of Warfarin";

/// Writes a PharmGKB-shaped CSV with `n` rows. Doses follow the clinical
/// formula plus noise; about 10% of rows lack a height or a dose.
pub fn write_fixture(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let height = Normal::new(168.0, 10.0).unwrap();
    let weight = Normal::new(78.0, 18.0).unwrap();
    let noise = Normal::new(0.0, 0.9).unwrap();
    let races = ["White", "Asian", "Black or African American", "Unknown"];
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "{HEADER}").unwrap();
    for i in 0..n {
        let decade: u32 = rng.random_range(2..=9);
        let age = if decade == 9 { "90+".to_string() } else { format!("{}0 - {}9", decade, decade) };
        let h: f64 = height.sample(&mut rng);
        let w: f64 = Distribution::<f64>::sample(&weight, &mut rng).max(35.0);
        let race_idx = rng.random_range(0..races.len());
        let enzyme = rng.random_bool(0.03);
        let amio = rng.random_bool(0.06);
        let form = 4.0376 - 0.2546 * decade as f64 + 0.0118 * h + 0.0134 * w
            + [0.0, -0.6752, 0.4060, 0.0443][race_idx]
            + if enzyme { 1.2799 } else { 0.0 }
            - if amio { 0.5695 } else { 0.0 }
            + noise.sample(&mut rng);
        let dose = form.max(1.0).powi(2);
        let gender = if rng.random_bool(0.5) { "male" } else { "female" };
        let h_cell = if rng.random_bool(0.08) { String::new() } else { format!("{h:.1}") };
        let d_cell = if rng.random_bool(0.03) { String::new() } else { format!("{dose:.2}") };
        writeln!(
            f,
            "PA{i},{gender},{race},,{age},{h_cell},{w:.1},{c},0,0,{a},{d_cell}",
            race = races[race_idx],
            c = u8::from(enzyme),
            a = u8::from(amio),
        )
        .unwrap();
    }
}

/// The real PharmGKB export, if one has been provided.
pub fn real_cohort_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("DOSEBANDIT_DATA") {
        let p = PathBuf::from(p);
        return p.exists().then_some(p);
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/warfarin.csv");
    root.exists().then_some(root)
}
