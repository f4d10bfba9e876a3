//! TOML configuration files. Every key is optional; missing keys keep
//! their defaults.
//!
//! ```toml
//! [separator]
//! outer_iters = 50
//! eta = 10.0
//! backend = "wsilrma"
//!
//! [separator.ot]
//! lambda = 4.0
//! gamma = 1.0
//!
//! [stft]
//! frame_len = 512
//! hop = 256
//!
//! [bench]
//! t60_grid = [0.2]
//! n_mixtures = 2
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::experiment::ExperimentPlan;
use crate::separator::SeparatorConfig;
use crate::stft::StftConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub separator: SeparatorConfig,
    pub stft: StftConfig,
    pub bench: ExperimentPlan,
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::separator::Backend;

    #[test]
    fn partial_file_overrides_defaults() {
        let cfg = FileConfig::from_toml(
            "[separator]\nouter_iters = 7\nbackend = \"auxiva\"\n[separator.ot]\ngamma = 2.5\n[stft]\nhop = 256\n",
        )
        .unwrap();
        assert_eq!(cfg.separator.outer_iters, 7);
        assert_eq!(cfg.separator.backend, Backend::Auxiva);
        assert_eq!(cfg.separator.ot.gamma, 2.5);
        assert_eq!(cfg.separator.ot.lambda, 4.0);
        assert_eq!(cfg.separator.eta, 30.0);
        assert_eq!(cfg.stft.hop, 256);
        assert_eq!(cfg.stft.frame_len, 1024);
        assert_eq!(cfg.bench, ExperimentPlan::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        assert!(matches!(FileConfig::from_toml("[separator]\nouter_iter = 7\n"), Err(Error::Config(_))));
        assert!(matches!(FileConfig::from_toml("[separator]\nbackend = \"fastmnmf\"\n"), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip() {
        let cfg = FileConfig::default();
        let back = FileConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
