//! Writes model files for the command-line tool.
//!
//! ```text
//! cargo run --example export_models -- out/
//! isddp solve --model out/inventory.json --mode sddp --report out/run.csv
//! ```

use std::path::PathBuf;

use isddp::model::{inventory_instance, save_model};
use isddp::portfolio::{generate_instance, PortfolioConfig};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;
    let models = [
        ("inventory.json", inventory_instance(3, 2, 5)),
        ("inventory-long.json", inventory_instance(6, 3, 9)),
        ("portfolio.json", generate_instance(&PortfolioConfig::new(10, 6, 4, 1))),
    ];
    for (name, model) in models {
        let path = dir.join(name);
        std::fs::write(&path, save_model(&model))?;
        println!("{}  T={} fan={}", path.display(), model.horizon, model.stage(model.horizon).len());
    }
    Ok(())
}
