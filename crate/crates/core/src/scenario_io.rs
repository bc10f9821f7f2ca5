//! Scenario files, calibration sources, run manifests and output folders.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{Calibration, InitialState, MotionAnchors, ObjectSpec, Scenario, SimSettings, TiltSchedule, DEFAULT_IMPULSE_MM_S};
use crate::error::{Error, Result};
use crate::guidance::{GuidanceGoal, OptimizeSettings};
use crate::lattice::{calibrate_from_anchors, read_anchors, LatticeCalibration};
use crate::map::StiffnessMap;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUT_DIR_ENV: &str = "COPESS_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "copess-out";

/// On-disk scenario. Only `map` is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub object: ObjectSpec,
    pub map: StiffnessMap,
    #[serde(default)]
    pub tilt_schedule: TiltSchedule,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GuidanceGoal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizeSettings>,
}

impl ScenarioFile {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self {
            object: scenario.object,
            map: scenario.map,
            tilt_schedule: scenario.tilt_schedule.clone(),
            initial: scenario.initial,
            sim: scenario.sim,
            goal: None,
            optimizer: None,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            object: self.object,
            map: self.map,
            tilt_schedule: self.tilt_schedule.clone(),
            initial: self.initial,
            sim: self.sim,
        }
    }

    /// All violations across the scenario and the goal.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.scenario().violations();
        if let Some(goal) = &self.goal {
            v.extend(goal.violations());
        }
        if let Some(opt) = &self.optimizer {
            if opt.budget == 0 {
                v.push("optimizer budget must be at least 1".into());
            }
        }
        v
    }

    /// Resolved scenario with every default filled in.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the resolved scenario, so equivalent files share a digest.
    pub fn digest(&self) -> String {
        let compact = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }
}

/// Parses without validating; `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            path: origin.into(),
            message: format!("line {} column {}, field `{path}`: {inner}", inner.line(), inner.column()),
        }
    })
}

/// Parses and validates, reporting every violation at once.
pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    let text = fs::read_to_string(path)?;
    let file = parse_scenario(&text, &path.display().to_string())?;
    let v = file.violations();
    if v.is_empty() {
        Ok(file)
    } else {
        Err(Error::Validation(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationSource {
    Builtin,
    File { path: String, sha256: String },
}

/// Built-in calibration, or one fitted from a lattice anchor CSV.
pub fn load_calibration(anchor_csv: Option<&Path>) -> Result<(Calibration, CalibrationSource)> {
    let Some(path) = anchor_csv else {
        return Ok((Calibration::builtin(), CalibrationSource::Builtin));
    };
    let bytes = fs::read(path)?;
    let anchors = read_anchors(bytes.as_slice()).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let lattice: LatticeCalibration = calibrate_from_anchors(&anchors)?;
    let calibration = Calibration::from_anchors(lattice, &MotionAnchors::builtin(), DEFAULT_IMPULSE_MM_S)?;
    Ok((
        calibration,
        CalibrationSource::File {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario_digest: Option<String>,
    pub calibration: CalibrationSource,
    pub seed: u64,
    /// Relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, calibration: CalibrationSource, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            scenario_digest: None,
            calibration,
            seed,
            outputs: Vec::new(),
        }
    }
}

/// Output folder that records what it writes and ends with one manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    manifest: RunManifest,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>, manifest: RunManifest) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_mut(&mut self) -> &mut RunManifest {
        &mut self.manifest
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, bytes)?;
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_string());
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Buffers a CSV writer callback and stores the result under `name`.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST_FILE), text)?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let f = parse_scenario(r#"{"map": [[0.1,0.1,0.1,0.1],[0.1,0.1,0.1,0.1],[0.1,0.1,0.1,0.1],[0.1,0.1,0.1,0.1]]}"#, "t").unwrap();
        assert_eq!(f.object.mass_kg, 0.5);
        assert_eq!(f.sim.frame_hz, 20.0);
        assert_eq!(f.tilt_schedule.knots.iter().map(|k| k.deg).fold(0.0, f64::max), 20.0);
        assert_eq!(f.tilt_schedule.knots[1].t_s, 100.0);
        assert!(f.violations().is_empty());
        let echoed = f.canonical_json();
        assert!(echoed.contains("\"mass_kg\": 0.5"));
        assert_eq!(parse_scenario(&echoed, "echo").unwrap(), f);
    }

    #[test]
    fn parse_errors_name_the_field() {
        let err = parse_scenario(r#"{"map": [[0.1,0.1,0.1,0.1]], "sim": {}}"#, "bad.json").unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("map"), "{err}");
        let err = parse_scenario(r#"{"map": [], "colour": 1}"#, "x").unwrap_err();
        assert!(err.to_string().contains("colour") || err.to_string().contains("map"));
        let err = parse_scenario(r#"{"object": {"mass_kg": 1}}"#, "x").unwrap_err();
        assert!(err.to_string().contains("map"), "{err}");
    }

    #[test]
    fn validation_lists_everything() {
        let mut f = parse_scenario(r#"{"map": [[0.05,0.1,0.1,0.1],[0.1,0.1,0.1,0.1],[0.1,0.1,0.1,0.1],[0.1,0.1,0.1,0.4]]}"#, "t").unwrap();
        f.sim.dt_s = -1.0;
        let v = f.violations();
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v[0].contains("7 %"));
    }

    #[test]
    fn digest_tracks_content() {
        let a = ScenarioFile::from_scenario(&Scenario::new(StiffnessMap::uniform(0.1)));
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.initial.vx_mm_s = 1.0;
        assert_ne!(a.digest(), b.digest());
        let explicit = parse_scenario(&a.canonical_json(), "x").unwrap();
        assert_eq!(explicit.digest(), a.digest());
    }
}
