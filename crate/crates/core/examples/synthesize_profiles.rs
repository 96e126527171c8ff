//! Synthesizes single-source profiles from the built-in detection-rate
//! table and checks the empirical rates against it.
//!
//! cargo run --example synthesize_profiles [per_fluid]

use mixlr::fixtures;
use mixlr::profiles::{detection_rates, synthesize_dataset, write_profile_table, MarkerPanel};

fn main() -> mixlr::Result<()> {
    let per_fluid = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let table = fixtures::reference_rates();
    let panel = MarkerPanel::default();
    let ds = synthesize_dataset(&table, &panel, per_fluid, 4, 7)?;
    println!("{} samples, {} markers, threshold {} rfu", ds.len(), panel.len(), panel.threshold_rfu);

    let got = detection_rates(&ds)?;
    let mut worst = (0.0f64, String::new());
    for (labels, row) in &table.rows {
        for (m, &p) in panel.markers.iter().zip(row) {
            let q = got.rate(*labels, m).unwrap_or(f64::NAN);
            if (q - p).abs() > worst.0 {
                worst = ((q - p).abs(), format!("{labels} {m}: {q:.3} vs {p:.3}"));
            }
        }
    }
    println!("largest rate deviation {:.4} ({})", worst.0, worst.1);

    let csv = write_profile_table(&ds);
    for line in csv.lines().take(3) {
        println!("{line}");
    }
    Ok(())
}
