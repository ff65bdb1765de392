//! Runs the enumeration-oracle suite: every dynamic program checked
//! against brute-force references on small seeded instances.

use ctcattn::cli::oracle_suite;

fn main() {
    let mut failed = false;
    for (name, passed, detail) in oracle_suite(4_000_000, 40) {
        let tag = if passed { "PASS" } else { "FAIL" };
        if detail.is_empty() {
            println!("{tag} {name}");
        } else {
            println!("{tag} {name} ({detail})");
        }
        failed |= !passed;
    }
    std::process::exit(if failed { 3 } else { 0 });
}
