//! Expands the default prompt grid and shows a few rendered prompts with
//! their reply sets.
//!
//!     cargo run --example prompt_grid [-- path/to/grid.toml]

use std::collections::BTreeSet;

use replyscore::promptgrid::{expand_grid, render, GridConfig};

fn main() -> replyscore::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => GridConfig::load(path)?,
        None => GridConfig::default_grid(),
    };
    let specs = expand_grid(&config)?;
    let distinct: BTreeSet<&str> = specs
        .iter()
        .flat_map(|s| s.replies.iter().map(|r| r.text.as_str()))
        .collect();
    println!(
        "{} prompts, {} replies each, {} distinct replies",
        specs.len(),
        specs[0].replies.len(),
        distinct.len()
    );
    println!(
        "codes: {}",
        specs.iter().map(|s| s.code.to_string()).collect::<Vec<_>>().join(" ")
    );

    for code in ["2-1-0", "7-2-2", "8-2-4-2"] {
        let Some(spec) = specs.iter().find(|s| s.code.to_string() == code) else {
            continue;
        };
        println!("\n[{code}] ({:?} agreement)", spec.gender);
        println!("{}", render(spec, "Legen var grundig og hyggelig .")?);
        for r in &spec.replies {
            println!("  {:<4} {}", r.label.to_string(), r.text);
        }
    }
    Ok(())
}
