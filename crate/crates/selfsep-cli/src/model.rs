//! Fitted-model files written by `fit` and read by `predict`.
//!
//! A model file opens with `# selfsep model` and a `method = <tag>` line.
//! The locally weighted regression methods are nonparametric, so their
//! models embed the training datasets verbatim as sections. The point
//! estimate methods store the estimated weight pair, and the posterior
//! method stores its whole probability table. Floats are written in
//! shortest round-trip form, so a reloaded model predicts exactly what the
//! freshly fitted one would.

use anyhow::{anyhow, Result};
use selfsep::density::WeightGrid;
use selfsep::error::Error;
use selfsep::evaluation::Method;
use selfsep::model_based::WeightPosterior;
use selfsep::pilot::UtilityWeights;
use selfsep::scenario::{dataset_text, parse_dataset, Dataset};
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &str = "# selfsep model";
const POSTERIOR_HEADER: &str = "w1,w2,probability";

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    MfHifi { hifi: Dataset },
    MfMulti { hifi: Dataset, lofi: Dataset },
    MbMap { method: Method, weights: UtilityWeights },
    MbBayes { posterior: WeightPosterior },
}

struct Section<'a> {
    name: &'a str,
    /// Zero-based index of the `[name]` line.
    header: usize,
    body: &'a [&'a str],
}

impl Model {
    pub fn method(&self) -> Method {
        match self {
            Model::MfHifi { .. } => Method::MfHifi,
            Model::MfMulti { .. } => Method::MfMulti,
            Model::MbMap { method, .. } => *method,
            Model::MbBayes { .. } => Method::MbBayes,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()?)
            .map_err(|e| anyhow!("writing model file {}: {e}", path.display()))
    }

    fn render(&self) -> Result<String> {
        let mut text = format!("{MAGIC}\nmethod = {}\n", self.method().tag());
        match self {
            Model::MfHifi { hifi } => {
                write!(text, "\n[hifi-train]\n{}", dataset_text(hifi)?)?;
            }
            Model::MfMulti { hifi, lofi } => {
                write!(text, "\n[hifi-train]\n{}", dataset_text(hifi)?)?;
                write!(text, "\n[lofi-train]\n{}", dataset_text(lofi)?)?;
            }
            Model::MbMap { weights, .. } => {
                write!(text, "w1 = {}\nw2 = {}\n", weights.w1, weights.w2)?;
            }
            Model::MbBayes { posterior } => {
                write!(text, "\n[posterior]\n{POSTERIOR_HEADER}\n")?;
                for (w, p) in posterior.combos().iter().zip(posterior.probabilities()) {
                    writeln!(text, "{},{},{:e}", w.w1, w.w2, p)?;
                }
            }
        }
        Ok(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow!("reading model file {}: {e}", path.display()))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let err =
            |line: usize, message: String| anyhow!("{}: line {line}: {message}", path.display());
        let lines: Vec<&str> = text.lines().collect();
        if lines.first().map(|l| l.trim()) != Some(MAGIC) {
            return Err(err(1, format!("expected a '{MAGIC}' first line")));
        }
        let method: Method = lines
            .get(1)
            .map(|l| l.trim())
            .and_then(|l| l.strip_prefix("method"))
            .map(|l| l.trim_start())
            .and_then(|l| l.strip_prefix('='))
            .ok_or_else(|| err(2, "expected 'method = <tag>'".into()))?
            .trim()
            .parse()
            .map_err(|e| err(2, format!("{e}")))?;

        // plain `key = value` fields run until the first section header
        let mut fields = Vec::new();
        let mut cursor = 2;
        while cursor < lines.len() && !lines[cursor].trim_start().starts_with('[') {
            let raw = lines[cursor].trim();
            if !raw.is_empty() {
                let (key, value) = raw
                    .split_once('=')
                    .ok_or_else(|| err(cursor + 1, format!("expected 'key = value', found '{raw}'")))?;
                fields.push((cursor + 1, key.trim(), value.trim()));
            }
            cursor += 1;
        }
        let mut headers = Vec::new();
        for (index, line) in lines.iter().enumerate().skip(cursor) {
            let trimmed = line.trim();
            if let Some(inner) = trimmed.strip_prefix('[') {
                let name = inner.strip_suffix(']').ok_or_else(|| {
                    err(index + 1, format!("unterminated section header '{trimmed}'"))
                })?;
                headers.push((index, name));
            }
        }
        let mut sections = Vec::new();
        for (k, &(header, name)) in headers.iter().enumerate() {
            let end = headers.get(k + 1).map_or(lines.len(), |next| next.0);
            if sections.iter().any(|s: &Section| s.name == name) {
                return Err(err(header + 1, format!("duplicate section [{name}]")));
            }
            sections.push(Section { name, header, body: &lines[header + 1..end] });
        }

        let known_fields: &[&str] = match method {
            Method::MbMapHifi | Method::MbMapMulti => &["w1", "w2"],
            _ => &[],
        };
        if let Some((line, key, _)) = fields.iter().find(|(_, key, _)| !known_fields.contains(key))
        {
            return Err(err(*line, format!("method {} has no field '{key}'", method.tag())));
        }
        let known_sections: &[&str] = match method {
            Method::MfHifi => &["hifi-train"],
            Method::MfMulti => &["hifi-train", "lofi-train"],
            Method::MbMapHifi | Method::MbMapMulti => &[],
            Method::MbBayes => &["posterior"],
        };
        if let Some(extra) = sections.iter().find(|s| !known_sections.contains(&s.name)) {
            return Err(err(
                extra.header + 1,
                format!("method {} has no section [{}]", method.tag(), extra.name),
            ));
        }

        let dataset = |name: &str| -> Result<Dataset> {
            let section = sections.iter().find(|s| s.name == name).ok_or_else(|| {
                anyhow!("{}: missing the [{name}] section method {} needs", path.display(), method.tag())
            })?;
            parse_dataset(&section.body.join("\n"), path).map_err(|e| match e {
                Error::Parse { line, message, .. } => err(section.header + 1 + line, message),
                other => anyhow!("{}: [{name}] section: {other}", path.display()),
            })
        };
        let field = |name: &str| -> Result<f64> {
            let (line, _, value) = fields
                .iter()
                .find(|(_, key, _)| *key == name)
                .ok_or_else(|| {
                    anyhow!("{}: missing the '{name}' field method {} needs", path.display(), method.tag())
                })?;
            value
                .parse()
                .map_err(|_| err(*line, format!("{name}: invalid float '{value}'")))
        };

        match method {
            Method::MfHifi => Ok(Model::MfHifi { hifi: dataset("hifi-train")? }),
            Method::MfMulti => Ok(Model::MfMulti {
                hifi: dataset("hifi-train")?,
                lofi: dataset("lofi-train")?,
            }),
            Method::MbMapHifi | Method::MbMapMulti => {
                let weights = UtilityWeights::new(field("w1")?, field("w2")?)
                    .map_err(|e| anyhow!("{}: {e}", path.display()))?;
                Ok(Model::MbMap { method, weights })
            }
            Method::MbBayes => {
                let section = sections.iter().find(|s| s.name == "posterior").ok_or_else(
                    || anyhow!("{}: missing the [posterior] section method mb-bayes needs", path.display()),
                )?;
                Ok(Model::MbBayes { posterior: parse_posterior(section, path)? })
            }
        }
    }
}

fn parse_posterior(section: &Section, path: &Path) -> Result<WeightPosterior> {
    let err = |offset: usize, message: String| {
        anyhow!("{}: line {}: {message}", path.display(), section.header + 1 + offset)
    };
    match section.body.first().map(|l| l.trim()) {
        Some(POSTERIOR_HEADER) => {}
        Some(other) => {
            return Err(err(1, format!("expected '{POSTERIOR_HEADER}', found '{other}'")))
        }
        None => return Err(err(1, format!("expected a '{POSTERIOR_HEADER}' row"))),
    }
    let mut w1_axis: Vec<f64> = Vec::new();
    let mut w2_axis: Vec<f64> = Vec::new();
    let mut probabilities = Vec::new();
    for (offset, line) in section.body.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(err(offset + 1, format!("expected 3 fields, found {}", fields.len())));
        }
        let mut values = [0.0; 3];
        for (k, (raw, name)) in fields.iter().zip(["w1", "w2", "probability"]).enumerate() {
            values[k] = raw
                .parse()
                .map_err(|_| err(offset + 1, format!("{name}: invalid float '{raw}'")))?;
        }
        if !w1_axis.contains(&values[0]) {
            w1_axis.push(values[0]);
        }
        if !w2_axis.contains(&values[1]) {
            w2_axis.push(values[1]);
        }
        probabilities.push(values[2]);
    }
    let grid = WeightGrid::new(w1_axis, w2_axis)
        .map_err(|e| anyhow!("{}: [posterior] section: {e}", path.display()))?;
    WeightPosterior::from_normalized(grid, probabilities)
        .map_err(|e| anyhow!("{}: [posterior] section: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use selfsep::perception::Fidelity;
    use selfsep::pilot::DecisionConfig;
    use selfsep::scenario::{generate_dataset, train_bearings, GeometryConfig};

    fn sample_dataset(count: usize, fidelity: Fidelity, seed: u64) -> Dataset {
        generate_dataset(
            count,
            fidelity,
            &UtilityWeights::new(0.89, 0.90).unwrap(),
            &train_bearings(),
            &GeometryConfig::default(),
            &DecisionConfig::default(),
            seed,
        )
        .unwrap()
    }

    fn round_trip(model: &Model) -> Model {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model");
        model.save(&path).unwrap();
        let reloaded = Model::load(&path).unwrap();
        // a second save proves the rendering is a fixed point
        let again = dir.path().join("model2");
        reloaded.save(&again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
        reloaded
    }

    #[test]
    fn every_model_kind_round_trips_bit_exactly() {
        let hifi = sample_dataset(4, Fidelity::High, 11);
        let lofi = sample_dataset(6, Fidelity::Low, 12);

        let model = Model::MfHifi { hifi: hifi.clone() };
        assert_eq!(round_trip(&model), model);

        let model = Model::MfMulti { hifi: hifi.clone(), lofi };
        assert_eq!(round_trip(&model), model);

        let model = Model::MbMap {
            method: Method::MbMapMulti,
            weights: UtilityWeights::new(0.88, 0.9).unwrap(),
        };
        assert_eq!(round_trip(&model), model);

        let grid = WeightGrid::new(vec![0.84, 0.92], vec![0.84, 0.92]).unwrap();
        let posterior =
            WeightPosterior::from_probabilities(grid, vec![0.125, 0.5, 0.25, 0.125]).unwrap();
        let model = Model::MbBayes { posterior };
        assert_eq!(round_trip(&model), model);
    }

    #[test]
    fn malformed_model_files_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model");
        let check = |content: &str, needle: &str| {
            std::fs::write(&path, content).unwrap();
            let message = Model::load(&path).unwrap_err().to_string();
            assert!(message.contains(needle), "'{message}' lacks '{needle}'");
        };

        check("a1,a2\n0.0,0.1\n", "line 1");
        check("# selfsep model\nmodel = mf-hifi\n", "line 2");
        check("# selfsep model\nmethod = mf-fancy\n", "line 2");
        check("# selfsep model\nmethod = mb-map-hifi\nw1 = 0.9\n", "'w2'");
        check(
            "# selfsep model\nmethod = mb-map-hifi\nw1 = 0.9\nw2 = huge\n",
            "line 4",
        );
        check(
            "# selfsep model\nmethod = mf-hifi\n\n[lofi-train]\n",
            "line 4",
        );
        check("# selfsep model\nmethod = mf-hifi\n", "[hifi-train]");
        // a bad float inside an embedded dataset reports the model-file line
        let hifi = sample_dataset(2, Fidelity::High, 13);
        Model::MfHifi { hifi }.save(&path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("s1_px", "sx_px");
        std::fs::write(&path, &text).unwrap();
        let message = Model::load(&path).unwrap_err().to_string();
        assert!(message.contains("line 6"), "{message}");
    }

    #[test]
    fn posterior_sections_must_carry_normalized_mass() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model");
        std::fs::write(
            &path,
            "# selfsep model\nmethod = mb-bayes\n\n[posterior]\nw1,w2,probability\n\
             0.8,0.8,0.3\n0.8,0.9,0.3\n0.9,0.8,0.3\n0.9,0.9,0.3\n",
        )
        .unwrap();
        let message = Model::load(&path).unwrap_err().to_string();
        assert!(message.contains("sum to one"), "{message}");
    }
}
