//! Loading models, catalogs and generators from command-line options.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::Args;
use reflect_core::config::{load_model, load_model_split};
use reflect_core::engagement::{default_scale, scale_with_extension};
use reflect_core::questions::{HttpGenerator, LlmSettings, QuestionCatalog, StubGenerator, TextGenerator};
use reflect_core::session::{Components, EngineConfig, DEFAULT_N_SAMPLES, DEFAULT_SEED};
use reflect_core::ReferenceModel;

/// Which model, catalog and survey to run. All default to the built-ins.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Model file (TOML). Holds the schema too unless --schema is given.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Schema file (TOML); the coefficients then come from --model.
    #[arg(long, value_name = "PATH", requires = "model")]
    pub schema: Option<PathBuf>,
    /// Question catalog (TOML).
    #[arg(long, value_name = "PATH")]
    pub questions: Option<PathBuf>,
    /// Extra survey items, one per line, `[R]` prefix for reverse-scored.
    #[arg(long, value_name = "PATH")]
    pub scale_items: Option<PathBuf>,
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

impl ModelArgs {
    pub fn components(&self) -> anyhow::Result<Components> {
        let model = match (&self.schema, &self.model) {
            (Some(schema), Some(model)) => load_model_split(&read(schema)?, &read(model)?)?,
            (None, Some(model)) => load_model(&read(model)?)?,
            (Some(_), None) => bail!("--schema needs --model for the coefficients"),
            (None, None) => ReferenceModel::reference(),
        };
        let catalog = match &self.questions {
            Some(path) => QuestionCatalog::parse(&read(path)?)?,
            None => QuestionCatalog::builtin(),
        };
        let scale = match &self.scale_items {
            Some(path) => scale_with_extension(&read(path)?),
            None => default_scale(),
        };
        Ok(Components::new(Arc::new(model), catalog, scale))
    }
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Seed for sessions created without one.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Perturbation samples per explanation.
    #[arg(long, default_value_t = DEFAULT_N_SAMPLES)]
    pub n_samples: usize,
}

impl EngineArgs {
    pub fn config(&self) -> EngineConfig {
        EngineConfig {
            seed: self.seed,
            n_samples: self.n_samples,
            ..EngineConfig::default()
        }
    }
}

/// Where generated questions come from. Without either option the
/// generated-question endpoint is disabled.
#[derive(Debug, Clone, Default, Args)]
pub struct LlmArgs {
    /// Base address of an OpenAI-compatible completion endpoint.
    #[arg(long, value_name = "URL", env = "REFLECT_LLM_ENDPOINT")]
    pub llm_endpoint: Option<String>,
    #[arg(long, value_name = "NAME", env = "REFLECT_LLM_MODEL")]
    pub llm_model: Option<String>,
    /// Offline stub: JSON lines of {"prompt_sha256", "completion"}.
    #[arg(long, value_name = "PATH", conflicts_with = "llm_endpoint")]
    pub stub: Option<PathBuf>,
}

impl LlmArgs {
    pub fn generator(&self) -> anyhow::Result<Option<Arc<dyn TextGenerator>>> {
        if let Some(path) = &self.stub {
            let stub = StubGenerator::from_fixture(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
            return Ok(Some(Arc::new(stub)));
        }
        let Some(base_url) = &self.llm_endpoint else {
            return Ok(None);
        };
        let mut settings = LlmSettings {
            base_url: base_url.clone(),
            ..LlmSettings::default()
        };
        if let Some(model) = &self.llm_model {
            settings.model = model.clone();
        }
        Ok(Some(Arc::new(HttpGenerator::new(settings)?)))
    }
}
