//! The four scripted edge-case scenarios, with their per-notification
//! audits. Each one pins an exact, deterministic outcome:
//!
//! * `fig7` — four producers on a 2x2 grid around one beacon/publish cycle:
//!   lost, delivered-uncertified-true, queued, lost;
//! * `lonely-cls` — the complete-list blind spot: one liar aiming at an
//!   empty cell gets certified;
//! * `liar-corrected` — two honest co-located neighbors outvote a lie;
//! * `edge-tie` — a one-reply poll across a cell edge ties and stays
//!   uncertified.
//!
//! ```text
//! cargo run --release --example scripted_scenarios
//! ```

use fogcert::scenario::{run_scenario, SCENARIOS};

fn main() {
    for name in SCENARIOS {
        let result = run_scenario(name).expect("scenario runs");
        let r = &result.output.report;
        println!("== {name} ({}/{}) ==", r.arch, r.strategy);
        println!(
            "published {} | delivered {} | lost {} | queued {} | cert-true {} | uncert-true {} | cert-false {}",
            r.published, r.delivered, r.lost, r.queued, r.dt_cert, r.dt_uncert, r.df_cert
        );
        for row in &result.output.audits {
            println!("  {}", row.to_line());
        }
        println!();
    }
}
