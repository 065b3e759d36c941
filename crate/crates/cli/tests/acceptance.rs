//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! Criteria 1-9 call the library directly. Criterion 10 drives the built
//! binary, which writes the figure CSVs and applies the qualitative gates,
//! and then re-reads the files it wrote.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fmrvol::verification::acceptance::{run_criterion, AcceptanceConfig, Outcome, CRITERIA};

const FIGURE_FILES: [(&str, &str); 4] = [
    ("fig1.csv", "S,vol,y_star,lower,upper"),
    ("fig2.csv", "S,vol,y_star,lower,upper"),
    ("fig3_rho_0.csv", "S,C_BS,C_with_C3,C_with_C3_and_C6"),
    ("fig3_rho_-0.2.csv", "S,C_BS,C_with_C3,C_with_C3_and_C6"),
];

fn check_files(dir: &Path) -> Result<usize, String> {
    let mut rows = 0;
    for (name, header) in FIGURE_FILES {
        let text = fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let mut lines = text.lines();
        if lines.next() != Some(header) {
            return Err(format!("{name}: unexpected header"));
        }
        for line in lines {
            if line.split(',').any(|c| !c.parse::<f64>().is_ok_and(f64::is_finite)) {
                return Err(format!("{name}: non-numeric or non-finite cell in '{line}'"));
            }
            rows += 1;
        }
    }
    Ok(rows)
}

fn figures_via_binary(cfg: &AcceptanceConfig) -> Outcome {
    let (_, name, budget) = CRITERIA[9];
    let dir = tempfile::tempdir().expect("temp dir");
    let t0 = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_fmrvol"))
        .args(["figures", "--set", "all", "--nu", &cfg.nu.to_string()])
        .arg("--out-dir")
        .arg(dir.path())
        .output();
    let elapsed = t0.elapsed().as_secs_f64();
    let (passed, detail) = match out {
        Err(e) => (false, format!("could not start binary: {e}")),
        Ok(o) => {
            let gates = String::from_utf8_lossy(&o.stderr).lines().filter(|l| l.starts_with('[')).count();
            match (o.status.code(), check_files(dir.path())) {
                (Some(0), Ok(rows)) if gates == 3 => (true, format!("4 files, {rows} rows, 3 gates passed")),
                (code, files) => (
                    false,
                    format!("exit {code:?}, files {files:?}, stderr: {}", String::from_utf8_lossy(&o.stderr).trim()),
                ),
            }
        }
    };
    Outcome {
        id: 10,
        name: name.to_string(),
        passed: passed && elapsed < budget,
        detail,
        elapsed_s: elapsed,
        budget_s: budget,
    }
}

fn main() {
    let cfg = AcceptanceConfig::default();
    let mut failed = 0;
    for id in 1..=10u8 {
        let o = if id == 10 { figures_via_binary(&cfg) } else { run_criterion(id, &cfg) };
        println!("{o}");
        failed += !o.passed as usize;
    }
    if failed > 0 {
        println!("{failed} of 10 criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
