use std::process::ExitCode;

use qjet::verify::{catalog, run_criterion};

fn main() -> ExitCode {
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, _) in catalog() {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let report = run_criterion(id).expect("listed criterion");
        println!("{}", report.line());
        if !report.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
