use std::path::{Path, PathBuf};

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

/// Two-step scenario on the desk dataset, written into `dir`.
pub fn short_scenario(dir: &Path, name: &str, mode: &str) -> PathBuf {
    let data = root().join("data/desk");
    let file = dir.join(format!("{name}.toml"));
    std::fs::write(
        &file,
        format!(
            r#"name = "{name}"
dataset = "{}"

[policy]
mode = "{mode}"

[caps]
anchors = {{ 2020 = 0.40, 2050 = 0.95 }}

[import_prices]
hydrogen = 100.0

[scrap_prices]
steel = 240.0

[tsa]
periods = 4

[pathway]
steps = [2020, 2050]
corridors = false
"#,
            data.display()
        ),
    )
    .unwrap();
    file
}
