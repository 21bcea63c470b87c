use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Cli;
use crate::Failure;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// `{config, version, seed}` block embedded in every output.
pub fn metadata(cli: &Cli) -> Value {
    json!({
        "config": cli,
        "version": VERSION,
        "seed": cli.seed,
    })
}

pub fn json_artifact<T: Serialize>(meta: Value, body: T) -> Result<String, Failure> {
    let mut v = serde_json::to_value(body).map_err(Failure::data)?;
    v.as_object_mut()
        .expect("artifact bodies are JSON objects")
        .insert("meta".into(), meta);
    let mut s = serde_json::to_string_pretty(&v).map_err(Failure::data)?;
    s.push('\n');
    Ok(s)
}

/// CSV table preceded by a single `# {meta}` comment line.
pub fn csv_artifact<F>(meta: Value, write_table: F) -> Result<String, Failure>
where
    F: FnOnce(&mut Vec<u8>) -> rough_core::Result<()>,
{
    let mut buf = format!("# {meta}\n").into_bytes();
    write_table(&mut buf).map_err(Failure::from)?;
    String::from_utf8(buf).map_err(Failure::data)
}

/// Writes to `--out`, else `<out-dir>/<default_name>`, else stdout.
pub fn emit(cli: &Cli, default_name: &str, content: &str) -> Result<(), Failure> {
    let target = match (&cli.out, &cli.out_dir) {
        (Some(p), _) if p.as_os_str() == "-" => None,
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => {
            fs::create_dir_all(dir).map_err(Failure::data)?;
            Some(dir.join(default_name))
        }
        (None, None) => None,
    };
    match target {
        Some(path) => write_file(path, content),
        None => io::stdout().write_all(content.as_bytes()).map_err(Failure::data),
    }
}

fn write_file(path: PathBuf, content: &str) -> Result<(), Failure> {
    fs::write(&path, content).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}
