//! Static HTML explanations and the on-disk run layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::{Attribution, DigestRecord, ExplanationDigest};
use crate::calibration::CalibrationReport;
use crate::classifier::Prediction;
use crate::corpus::{LabelSpace, TokenizedExample};
use crate::error::{Error, Result};
use crate::evaluation::{ConfidenceChangeReport, RemovalGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    /// Highlighted words per group.
    pub max_highlighted: usize,
    pub important_rgb: (u8, u8, u8),
    pub uncertain_rgb: (u8, u8, u8),
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            max_highlighted: 2,
            important_rgb: (37, 99, 235),
            uncertain_rgb: (220, 38, 38),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighlightGroup {
    Important,
    Uncertain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Highlight {
    pub position: usize,
    pub group: HighlightGroup,
    /// `|score| / max |score|` over the digest, in `(0, 1]`.
    pub intensity: f64,
}

/// Highlights for the top words of each group, by position.
pub fn highlights(digest: &ExplanationDigest, spec: &RenderSpec) -> Vec<Highlight> {
    let max = digest
        .important
        .iter()
        .chain(&digest.uncertain)
        .map(|w| w.score.abs())
        .fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    let mut out: Vec<Highlight> = digest
        .important
        .iter()
        .take(spec.max_highlighted)
        .map(|w| (w, HighlightGroup::Important))
        .chain(
            digest
                .uncertain
                .iter()
                .take(spec.max_highlighted)
                .map(|w| (w, HighlightGroup::Uncertain)),
        )
        .filter(|(w, _)| w.score != 0.0)
        .map(|(w, group)| Highlight {
            position: w.position,
            group,
            intensity: w.score.abs() / max,
        })
        .collect();
    out.sort_by_key(|h| h.position);
    out
}

pub fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// One `<section>` for an example: header with label and confidence, then
/// the tokens with highlighted spans.
pub fn render_example_block(
    example: &TokenizedExample,
    labels: &LabelSpace,
    prediction: &Prediction,
    digest: &ExplanationDigest,
    post_removal_confidence: Option<f64>,
    spec: &RenderSpec,
) -> Result<String> {
    let n = example.tokens.len();
    if let Some(w) = digest
        .important
        .iter()
        .chain(&digest.uncertain)
        .find(|w| w.position >= n)
    {
        return Err(Error::invalid(format!(
            "digest position {} out of range for `{}` ({n} tokens)",
            w.position, example.id
        )));
    }

    let label = labels
        .name(prediction.predicted_class)
        .map_or_else(|| prediction.predicted_class.to_string(), str::to_string);
    let confidence = match post_removal_confidence {
        Some(post) => format!("{:.2} \u{2192} {:.2}", prediction.confidence, post),
        None => format!("{:.2}", prediction.confidence),
    };

    let marks = highlights(digest, spec);
    let mut html = String::new();
    let _ = write!(
        html,
        "<section class=\"example\" id=\"ex-{}\">\n<h2>{} ({})</h2>\n<p class=\"tokens\">",
        escape_html(&example.id),
        escape_html(&label),
        confidence
    );
    for (i, tok) in example.tokens.iter().enumerate() {
        if i > 0 {
            html.push(' ');
        }
        let text = escape_html(tok);
        match marks.iter().find(|h| h.position == i) {
            Some(h) => {
                let ((r, g, b), class) = match h.group {
                    HighlightGroup::Important => (spec.important_rgb, "important"),
                    HighlightGroup::Uncertain => (spec.uncertain_rgb, "uncertain"),
                };
                let _ = write!(
                    html,
                    "<span class=\"{class}\" data-intensity=\"{:.3}\" style=\"background-color: rgba({r}, {g}, {b}, {:.3})\">{text}</span>",
                    h.intensity, h.intensity
                );
            }
            None => html.push_str(&text),
        }
    }
    html.push_str("</p>\n</section>\n");
    Ok(html)
}

/// Wraps rendered blocks into a standalone page with inline styles only.
pub fn html_document(title: &str, blocks: &[String]) -> String {
    let mut html = String::from("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>\n");
    let _ = writeln!(html, "<title>{}</title>", escape_html(title));
    html.push_str(
        "<style>\nbody { font-family: sans-serif; max-width: 60em; margin: 2em auto; }\n\
         section.example { border-bottom: 1px solid #ddd; padding: 0.5em 0; }\n\
         span.important, span.uncertain { padding: 0 0.15em; border-radius: 0.2em; }\n\
         span.uncertain { outline: 1px dashed rgb(220, 38, 38); }\n</style>\n</head>\n<body>\n",
    );
    for block in blocks {
        html.push_str(block);
    }
    html.push_str("</body>\n</html>\n");
    html
}

pub fn render_example_html(
    example: &TokenizedExample,
    labels: &LabelSpace,
    prediction: &Prediction,
    digest: &ExplanationDigest,
    post_removal_confidence: Option<f64>,
    spec: &RenderSpec,
) -> Result<String> {
    let block = render_example_block(example, labels, prediction, digest, post_removal_confidence, spec)?;
    Ok(html_document(&example.id, &[block]))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// Everything one run produced. Empty fields write no file.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    pub attributions: Vec<Attribution>,
    pub digests: Vec<DigestRecord>,
    /// Pre-rendered example blocks for `report.html`.
    pub rendered: Vec<String>,
    pub reports: Vec<ConfidenceChangeReport>,
    pub lmi_csv: Option<String>,
    pub calibration: Option<CalibrationReport>,
    /// Effective configuration, echoed into the manifest.
    pub config: Option<serde_json::Value>,
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

fn report_stem(group: RemovalGroup) -> &'static str {
    match group {
        RemovalGroup::Uncertain => "confidence_change",
        RemovalGroup::Important => "important_removal",
    }
}

/// Serializes the run as `(file name, contents)` pairs in manifest order.
pub fn run_files(outputs: &RunOutputs) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    if !outputs.attributions.is_empty() {
        files.push(("attributions.jsonl".into(), to_jsonl(&outputs.attributions)?.into_bytes()));
    }
    if !outputs.digests.is_empty() {
        files.push(("digests.jsonl".into(), to_jsonl(&outputs.digests)?.into_bytes()));
    }
    for report in &outputs.reports {
        let stem = report_stem(report.group);
        files.push((format!("{stem}.csv"), report.to_csv().into_bytes()));
        files.push((format!("{stem}.json"), serde_json::to_vec_pretty(report)?));
    }
    if let Some(csv) = &outputs.lmi_csv {
        files.push(("lmi.csv".into(), csv.clone().into_bytes()));
    }
    if let Some(cal) = &outputs.calibration {
        files.push(("calibration.json".into(), serde_json::to_vec_pretty(cal)?));
    }
    if !outputs.rendered.is_empty() {
        files.push((
            "report.html".into(),
            html_document("Explanations", &outputs.rendered).into_bytes(),
        ));
    }
    Ok(files)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes a file, naming it in any IO error.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `files` into `out_dir` and records them in `manifest.json`.
/// Entries left by earlier commands in the same directory are kept unless
/// overwritten; the manifest lists files by name.
pub fn write_artifacts(
    out_dir: &Path,
    files: &[(String, Vec<u8>)],
    config: Option<serde_json::Value>,
) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest_path = out_dir.join("manifest.json");
    let mut entries: BTreeMap<String, ManifestEntry> = BTreeMap::new();
    if let Ok(text) = std::fs::read_to_string(&manifest_path) {
        match serde_json::from_str::<Manifest>(&text) {
            Ok(old) => entries.extend(old.files.into_iter().map(|f| (f.name.clone(), f))),
            Err(e) => log::warn!("ignoring unreadable {}: {e}", manifest_path.display()),
        }
    }
    for (name, bytes) in files {
        write_file(&out_dir.join(name), bytes)?;
        entries.insert(
            name.clone(),
            ManifestEntry {
                name: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            },
        );
    }
    let manifest = Manifest {
        files: entries.into_values().collect(),
        config,
    };
    write_file(&manifest_path, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Writes every artifact of `outputs` plus `manifest.json` into `out_dir`.
pub fn export_run(outputs: &RunOutputs, out_dir: &Path) -> Result<Manifest> {
    write_artifacts(out_dir, &run_files(outputs)?, outputs.config.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::WordScore;
    use crate::classifier::Logits;

    fn example(tokens: &[&str]) -> TokenizedExample {
        TokenizedExample {
            id: "e1".into(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            gold_label: None,
        }
    }

    fn labels() -> LabelSpace {
        LabelSpace::new(vec!["negative".into(), "positive".into()]).unwrap()
    }

    fn prediction(conf: f64) -> Prediction {
        let logit = (conf / (1.0 - conf)).ln();
        Prediction::from_logits(Logits::new(vec![0.0, logit]).unwrap(), 1.0).unwrap()
    }

    fn ws(position: usize, token: &str, score: f64) -> WordScore {
        WordScore {
            position,
            token: token.into(),
            score,
        }
    }

    #[test]
    fn empty_digest_has_no_spans() {
        let html = render_example_html(
            &example(&["fine", "film"]),
            &labels(),
            &prediction(0.7),
            &ExplanationDigest::default(),
            None,
            &RenderSpec::default(),
        )
        .unwrap();
        assert!(!html.contains("<span"));
        assert!(html.contains("fine film"));
        assert!(html.contains("positive (0.70)"));
    }

    #[test]
    fn header_shows_confidence_change() {
        let digest = ExplanationDigest {
            important: vec![ws(0, "good", 0.2), ws(3, "fun", 0.1)],
            uncertain: vec![ws(1, "dreadful", -0.15), ws(2, "hard", -0.05)],
        };
        let html = render_example_html(
            &example(&["good", "dreadful", "hard", "fun"]),
            &labels(),
            &prediction(0.69),
            &digest,
            Some(0.93),
            &RenderSpec::default(),
        )
        .unwrap();
        assert!(html.contains("positive (0.69 \u{2192} 0.93)"));
        assert_eq!(html.matches("class=\"important\"").count(), 2);
        assert_eq!(html.matches("class=\"uncertain\"").count(), 2);
    }

    #[test]
    fn max_uncertain_gets_full_intensity() {
        let digest = ExplanationDigest {
            important: vec![ws(0, "ok", 0.1)],
            uncertain: vec![ws(1, "awful", -0.4)],
        };
        let h = highlights(&digest, &RenderSpec::default());
        let unc = h.iter().find(|h| h.group == HighlightGroup::Uncertain).unwrap();
        assert_eq!(unc.intensity, 1.0);
        let imp = h.iter().find(|h| h.group == HighlightGroup::Important).unwrap();
        assert!((imp.intensity - 0.25).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_position_is_error() {
        let digest = ExplanationDigest {
            important: vec![ws(5, "x", 0.1)],
            uncertain: vec![],
        };
        assert!(render_example_html(
            &example(&["a"]),
            &labels(),
            &prediction(0.6),
            &digest,
            None,
            &RenderSpec::default()
        )
        .is_err());
    }

    #[test]
    fn escaping() {
        assert_eq!(escape_html("<a href='x'>&\""), "&lt;a href=&#39;x&#39;&gt;&amp;&quot;");
    }

    #[test]
    fn empty_run_has_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_run(&RunOutputs::default(), dir.path()).unwrap();
        assert!(m.files.is_empty());
        assert!(dir.path().join("manifest.json").exists());
    }
}
