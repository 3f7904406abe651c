//! Output files with an embedded provenance header, written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::io::Result;

pub const TOOL: &str = "decentralab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Tool version, command line and input digests recorded in every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub inputs: Vec<InputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Provenance {
    /// `command` excludes the program name, which is recorded as the tool name.
    pub fn new(command: Vec<String>, inputs: &[PathBuf]) -> Result<Self> {
        let mut digests = Vec::new();
        for p in inputs {
            digests.push(InputDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            });
        }
        Ok(Provenance {
            tool: TOOL,
            version: VERSION,
            command,
            inputs: digests,
        })
    }

    pub fn command_line(&self) -> String {
        std::iter::once(TOOL.to_string())
            .chain(self.command.iter().map(|a| shell_quote(a)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn lines(&self) -> Vec<String> {
        let mut v = vec![
            format!("{} {}", self.tool, self.version),
            format!("command: {}", self.command_line()),
        ];
        for i in &self.inputs {
            v.push(format!("input: {} sha256={}", i.path, i.sha256));
        }
        v
    }

    /// `#`-prefixed header lines for delimited and text artifacts.
    pub fn comment_header(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }

    pub fn xml_comment(&self) -> String {
        let body: String = self
            .lines()
            .iter()
            .map(|l| format!("  {}\n", l.replace("--", "- -")))
            .collect();
        format!("<!--\n{body}-->\n")
    }
}

fn shell_quote(arg: &str) -> String {
    if !arg.is_empty() && arg.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=:,+@".contains(c)) {
        arg.to_string()
    } else {
        format!("'{}'", arg.replace('\'', "'\\''"))
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Writes artifacts of one command into an output directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    provenance: Provenance,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, provenance: Provenance) -> Self {
        Self {
            dir: dir.to_path_buf(),
            provenance,
            written: Vec::new(),
        }
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        log::info!("wrote {}", path.display());
        self.written.push(path.clone());
        Ok(path)
    }

    /// Delimited or plain-text artifact with a `#` header.
    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let content = format!("{}{body}", self.provenance.comment_header());
        self.put(name, content.as_bytes())
    }

    /// JSON object artifact; the provenance goes under a `provenance` key.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut v = serde_json::to_value(value).expect("artifact serializes");
        let prov = serde_json::to_value(&self.provenance).expect("provenance serializes");
        let doc = match v {
            serde_json::Value::Object(ref mut map) => {
                let mut out = serde_json::Map::new();
                out.insert("provenance".into(), prov);
                out.append(map);
                serde_json::Value::Object(out)
            }
            other => serde_json::json!({ "provenance": prov, "data": other }),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("json renders");
        s.push('\n');
        self.put(name, s.as_bytes())
    }

    /// SVG artifact with the provenance in an XML comment after the root tag opens.
    pub fn svg(&mut self, name: &str, svg: &str) -> Result<PathBuf> {
        let comment = self.provenance.xml_comment();
        let body = match svg.find('>') {
            Some(i) if svg.starts_with("<svg") => format!("{}\n{comment}{}", &svg[..=i], &svg[i + 1..]),
            _ => format!("{comment}{svg}"),
        };
        self.put(name, body.as_bytes())
    }
}
