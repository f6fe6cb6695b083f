//! Prints the resolved phase convention and the elaborated four-mode networks.

use quadnet::network::{build_four_mode_network, resolve_conventions, ExperimentConfig};
use quadnet::Family;

fn main() -> quadnet::Result<()> {
    for family in Family::ALL {
        let conv = resolve_conventions(family)?;
        println!("# {family}\n{conv}");
        println!(
            "{}",
            build_four_mode_network(&ExperimentConfig::new(family, 0.402), &conv)?
        );
    }
    Ok(())
}
