//! Finite-difference gradient check of every primitive and of the tiny
//! network end to end.

use mptf::commands::{cmd_gradcheck, gradcheck_table, GradCheckRow};

fn main() -> mptf::Result<()> {
    let rows = cmd_gradcheck(0)?;
    print!("{}", gradcheck_table(&rows));
    let failed = rows.iter().filter(|r| !r.passed()).count();
    println!("{} checks, {failed} failed", rows.len());
    if !rows.iter().all(GradCheckRow::passed) {
        std::process::exit(1);
    }
    Ok(())
}
