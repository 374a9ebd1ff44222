//! JSON run configuration: the file mirrors the flag set, flags win
//! field by field, and unresolved values fall back to the documented
//! defaults at the use site.

use std::path::Path;

use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Optional command echo; when present it must match the invoked
    /// subcommand, guarding against running a config against the wrong
    /// verb.
    pub command: Option<String>,
    pub r0: Option<f64>,
    pub r1: Option<f64>,
    pub nr: Option<usize>,
    pub ntheta: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    #[serde(rename = "T", alias = "t_final")]
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub smooth_k: Option<usize>,
    pub fit_t0: Option<f64>,
    pub fit_t1: Option<f64>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub samples: Option<usize>,
    pub jobs: Option<usize>,
    pub count: Option<usize>,
    pub shift_re: Option<f64>,
    pub shift_im: Option<f64>,
    pub field: Option<String>,
    pub parallel_tol: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    pub fn check_command(&self, invoked: &str) -> Result<(), String> {
        match &self.command {
            Some(c) if c != invoked => Err(format!(
                "config is for command '{c}' but '{invoked}' was invoked"
            )),
            _ => Ok(()),
        }
    }
}

/// Geometry and gain shared by every subcommand, already merged with
/// the config file and defaults.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub r0: f64,
    pub r1: f64,
    pub nr: usize,
    pub ntheta: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Resolved {
    pub fn meta_lines(&self) -> Vec<(String, String)> {
        vec![
            ("r0".into(), format!("{}", self.r0)),
            ("r1".into(), format!("{}", self.r1)),
            ("nr".into(), format!("{}", self.nr)),
            ("ntheta".into(), format!("{}", self.ntheta)),
            ("alpha".into(), format!("{}", self.alpha)),
            ("seed".into(), format!("{}", self.seed)),
        ]
    }
}
