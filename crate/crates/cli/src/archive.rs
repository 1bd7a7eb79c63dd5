//! On-disk artifact set of one pipeline run: JSON documents for the
//! extracted data and the sector/mode coefficient maps, CSV for the
//! reduction and frequency tables. Every document opens with the same
//! metadata header so files stay self-describing when copied around, and
//! all serialization is canonical (sorted keys, shortest round-trip
//! floats), so identical inputs produce byte-identical archives.

use crate::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use snbody_core::SystemData;
use std::collections::BTreeMap;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// The dimension-scaling convention baked into the effective potential;
/// recorded so archives remain interpretable if other conventions are
/// ever added.
pub const KAPPA_CONVENTION: &str = "kappa(D) = D^2";

/// Header carried by every archive document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub schema_version: u32,
    pub n: u32,
    /// SHA-256 of the canonical model serialization.
    pub model: String,
    pub kappa: String,
}

impl ArchiveMeta {
    pub fn new(n: u32, canonical_model: &str) -> ArchiveMeta {
        ArchiveMeta {
            schema_version: SCHEMA_VERSION,
            n,
            model: hex_digest(canonical_model),
            kappa: KAPPA_CONVENTION.to_string(),
        }
    }

    /// The same metadata as `#`-prefixed comment lines for CSV files.
    pub fn csv_header(&self) -> String {
        format!(
            "# schema_version={}\n# n={}\n# model={}\n# kappa={}\n",
            self.schema_version, self.n, self.model, self.kappa
        )
    }
}

fn hex_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let bytes = hasher.finalize();
    let mut out = String::with_capacity(2 * bytes.len());
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Sector-labeled small matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRecord {
    pub sector: String,
    pub rows: Vec<Vec<f64>>,
}

/// One sector-reduced cubic coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedRecord {
    pub block: String,
    /// Ordered sector digits, e.g. `"011"`.
    pub sectors: String,
    pub variant: String,
    pub value: f64,
}

/// One normal-mode cubic coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub modes: [String; 3],
    pub variant: String,
    pub value: f64,
}

/// Kinetic mode coefficients keep the source block: it fixes where the
/// derivative slots sit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticModeRecord {
    pub block: String,
    pub modes: [String; 3],
    pub variant: String,
    pub value: f64,
}

/// Extraction output: the minimum and every Taylor scalar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaylorDoc {
    pub meta: ArchiveMeta,
    pub system: SystemData,
}

/// Symmetry-coordinate reductions: quadratic sector blocks and the
/// sector-coupled cubic coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaDoc {
    pub meta: ArchiveMeta,
    pub force: Vec<SigmaRecord>,
    pub kinetic: Vec<SigmaRecord>,
    pub cubic_force: Vec<ReducedRecord>,
    pub cubic_kinetic: Vec<ReducedRecord>,
}

/// Normal-mode data: the five frequencies and the mode-mixed cubics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauDoc {
    pub meta: ArchiveMeta,
    pub lambda: BTreeMap<String, f64>,
    pub omega: BTreeMap<String, f64>,
    pub degenerate_sectors: Vec<String>,
    pub cubic_force: Vec<ModeRecord>,
    pub cubic_kinetic: Vec<KineticModeRecord>,
}

/// First-order correction: the effective cubic Hamiltonian polynomial and
/// the wavefunction correction solving its commutator equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delta1Doc {
    pub meta: ArchiveMeta,
    pub delta: f64,
    /// First-order energy correction; identically zero by parity.
    pub energy1: f64,
    pub h1_cubic: Vec<ModeRecord>,
    pub h1_linear: BTreeMap<String, f64>,
    pub delta1_cubic: Vec<ModeRecord>,
    pub delta1_linear: BTreeMap<String, f64>,
}

/// The full artifact set of one run.
#[derive(Clone, Debug)]
pub struct TensorArchive {
    pub taylor: TaylorDoc,
    pub sigma: SigmaDoc,
    pub tau: TauDoc,
    pub delta1: Delta1Doc,
    pub beta_csv: String,
    pub frequencies_csv: String,
}

/// File names inside an archive directory, in render order.
pub const ARCHIVE_FILES: [&str; 6] = [
    "taylor.json",
    "sigma.json",
    "tau.json",
    "delta1.json",
    "beta.csv",
    "frequencies.csv",
];

/// Canonical JSON rendering of one document: pretty-printed with sorted
/// maps and a trailing newline.
pub fn to_json<T: Serialize>(doc: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    Ok(text)
}

impl TensorArchive {
    /// Serializes every document to its exact file contents.
    pub fn render(&self) -> CliResult<BTreeMap<&'static str, String>> {
        let mut out = BTreeMap::new();
        out.insert("taylor.json", to_json(&self.taylor)?);
        out.insert("sigma.json", to_json(&self.sigma)?);
        out.insert("tau.json", to_json(&self.tau)?);
        out.insert("delta1.json", to_json(&self.delta1)?);
        out.insert("beta.csv", self.beta_csv.clone());
        out.insert("frequencies.csv", self.frequencies_csv.clone());
        Ok(out)
    }

    /// Writes the archive into a directory, creating it as needed.
    pub fn save(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in self.render()? {
            std::fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }

    /// Reads an archive back from a directory.
    pub fn load(dir: &Path) -> CliResult<TensorArchive> {
        let read = |name: &str| -> CliResult<String> {
            std::fs::read_to_string(dir.join(name)).map_err(|e| {
                CliError::Input(format!("cannot read {}/{name}: {e}", dir.display()))
            })
        };
        Ok(TensorArchive {
            taylor: serde_json::from_str(&read("taylor.json")?)?,
            sigma: serde_json::from_str(&read("sigma.json")?)?,
            tau: serde_json::from_str(&read("tau.json")?)?,
            delta1: serde_json::from_str(&read("delta1.json")?)?,
            beta_csv: read("beta.csv")?,
            frequencies_csv: read("frequencies.csv")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_header_is_stable() {
        let meta = ArchiveMeta::new(6, "{}");
        assert_eq!(meta.schema_version, SCHEMA_VERSION);
        // SHA-256 of the two-byte string "{}".
        assert_eq!(
            meta.model,
            "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
        );
        let header = meta.csv_header();
        assert!(header.starts_with("# schema_version=1\n# n=6\n# model=44136fa3"));
        assert!(header.ends_with("# kappa=kappa(D) = D^2\n"));
    }

    #[test]
    fn digest_differs_on_different_models() {
        assert_ne!(
            ArchiveMeta::new(6, "a").model,
            ArchiveMeta::new(6, "b").model
        );
    }
}
