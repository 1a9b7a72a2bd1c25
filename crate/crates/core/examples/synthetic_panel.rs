//! Writes a synthetic long-layout panel: `synthetic_panel N_DAYS SEED > panel.csv`.

use epfcal::synthetic::{self, SyntheticSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let n_days = args.next().and_then(|a| a.parse().ok()).unwrap_or(400);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let panel = synthetic::generate(&SyntheticSpec::new(n_days, seed));
    synthetic::write_long_csv(&panel, std::io::stdout().lock()).expect("write failed");
}
