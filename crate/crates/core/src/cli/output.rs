//! Output files. Every file starts with, or embeds, an [`Header`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::DirectionDistribution;

use super::config::{RunConfig, TOOL_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub master_seed: u64,
}

impl Header {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Header {
            tool: "nodal-tangency".into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config_hash: cfg.hash(),
            master_seed: cfg.master_seed,
        }
    }

    /// A `#`-prefixed line for CSV files.
    pub fn csv_comment(&self) -> String {
        format!(
            "# {} {} command={} config_hash={} master_seed={}\n",
            self.tool, self.tool_version, self.command, self.config_hash, self.master_seed
        )
    }
}

/// A JSON document with its header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document<T> {
    pub header: Header,
    #[serde(flatten)]
    pub body: T,
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, header: &Header, body: &T) -> Result<PathBuf> {
        let doc = Document { header: header.clone(), body };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        self.write(name, &s)
    }

    /// JSON lines; the first line is the header.
    pub fn write_jsonl<T: Serialize>(&self, name: &str, header: &Header, rows: &[T]) -> Result<PathBuf> {
        let mut s = serde_json::to_string(&serde_json::json!({ "header": header }))?;
        s.push('\n');
        for r in rows {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        self.write(name, &s)
    }
}

/// Bar chart of `μ̂(k)` as a standalone SVG.
pub fn histogram_svg(d: &DirectionDistribution, header: &Header) -> String {
    let (w, h, pad) = (640.0, 360.0, 48.0);
    let max_k = d.probabilities.keys().copied().max().unwrap_or(0);
    let pmax = d.probabilities.values().copied().fold(0.0, f64::max).max(1e-12);
    let bars = (max_k + 1) as f64;
    let bw = (w - 2.0 * pad) / bars;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        s,
        "<!-- {} {} config_hash={} master_seed={} -->",
        header.tool, header.tool_version, header.config_hash, header.master_seed
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = h - pad,
        x2 = w - pad
    );
    for k in 0..=max_k {
        let p = d.probabilities.get(&k).copied().unwrap_or(0.0);
        let bh = (h - 2.0 * pad) * p / pmax;
        let x = pad + k as f64 * bw;
        let fill = if k % 2 == 0 && k > 0 { "#3b6ea8" } else { "#c0504d" };
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"><title>k={k}: {p:.6}</title></rect>"#,
            x + 0.1 * bw,
            h - pad - bh,
            0.8 * bw,
            bh
        );
        if max_k <= 40 || k % 2 == 0 {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{k}</text>"#,
                x + 0.5 * bw,
                h - pad + 14.0
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" font-size="13" text-anchor="middle">tangency count k ({} components)</text>"#,
        w / 2.0,
        d.total
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{direction_distribution, ComponentTally};

    #[test]
    fn svg_has_one_bar_per_k() {
        let d = direction_distribution(&[ComponentTally::ok(2), ComponentTally::ok(4), ComponentTally::ok(2)]).unwrap();
        let cfg = RunConfig::torus(5);
        let svg = histogram_svg(&d, &Header::new("estimate", &cfg));
        assert_eq!(svg.matches("<rect x=").count(), 5);
        assert!(svg.contains(&cfg.hash()));
    }

    #[test]
    fn jsonl_starts_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(dir.path()).unwrap();
        let cfg = RunConfig::torus(5);
        let p = out.write_jsonl("x.jsonl", &Header::new("extract", &cfg), &[1, 2]).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["header"]["config_hash"], cfg.hash());
        assert_eq!(text.lines().count(), 3);
    }
}
