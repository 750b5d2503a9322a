//! Writes the generated benchmark files into a directory (default `problems`).

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "problems".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, text) in jesp_bench::generated() {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
