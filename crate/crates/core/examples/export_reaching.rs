//! Writes the reaching-task model files and search configurations used by
//! the `isoc` command line into a directory (default `models/`).

use std::path::PathBuf;

use isoc_core::io::write_json;
use isoc_core::isoc::reaching_search_config;
use isoc_core::model::{build_reaching_model, ModelKind, ReachingConfig};

fn main() -> isoc_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "models".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, kind) in [("lqg", ModelKind::Lqg), ("lqs", ModelKind::Lqs)] {
        let bundle = build_reaching_model(ReachingConfig { kind, ..Default::default() });
        std::fs::write(dir.join(format!("reaching_{name}.json")), bundle.to_json()? + "\n")?;
    }
    write_json(&dir.join("search_lqg_full.json"), &reaching_search_config(ModelKind::Lqg, 8, 20, 3))?;
    write_json(&dir.join("search_lqg_desk.json"), &reaching_search_config(ModelKind::Lqg, 6, 10, 2))?;
    write_json(&dir.join("search_lqs_full.json"), &reaching_search_config(ModelKind::Lqs, 10, 20, 3))?;
    println!("wrote reaching models and search configurations to {}", dir.display());
    Ok(())
}
