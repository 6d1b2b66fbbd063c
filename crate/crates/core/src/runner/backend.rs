use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::png::load_png;
use super::RunnerError;
use crate::denoiser::{MockCodec, MockDenoiser, PromptId, RemoteBackend};
use crate::engine::Backend;
use crate::image::ImageGrid;

/// Parsed `--backend` value.
///
/// `mock:target=a.png,target=b.png[,pull=P][,scale=F][,channels=K]` gives
/// each prompt, in order, the matching target image. Anything starting with
/// `http://` or `https://` is a remote backend.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Mock {
        targets: Vec<PathBuf>,
        pull: f64,
        scale: usize,
        latent_channels: Option<usize>,
    },
    Http {
        url: String,
    },
}

impl FromStr for BackendSpec {
    type Err = RunnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(BackendSpec::Http { url: s.to_string() });
        }
        let rest = s
            .strip_prefix("mock:")
            .ok_or_else(|| RunnerError::Config(format!("backend {s:?} is neither mock:... nor http(s)://...")))?;
        let mut targets = Vec::new();
        let mut pull = 1.0;
        let mut scale = 1;
        let mut latent_channels = None;
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| RunnerError::Config(format!("mock option {part:?} is not key=value")))?;
            let number = |what: &str| RunnerError::Config(format!("mock {what} {value:?} is not a number"));
            match key {
                "target" => targets.push(PathBuf::from(value)),
                "pull" => pull = value.parse().map_err(|_| number("pull"))?,
                "scale" => scale = value.parse().map_err(|_| number("scale"))?,
                "channels" => latent_channels = Some(value.parse().map_err(|_| number("channels"))?),
                other => return Err(RunnerError::Config(format!("unknown mock option {other:?}"))),
            }
        }
        if targets.is_empty() {
            return Err(RunnerError::Config("mock backend needs at least one target=FILE".into()));
        }
        Ok(BackendSpec::Mock {
            targets,
            pull,
            scale,
            latent_channels,
        })
    }
}

/// A backend ready for the engine, with the image shape it implies if any.
pub struct BuiltBackend {
    pub backend: Backend,
    pub shape: Option<(usize, usize, usize)>,
}

/// Loads mock targets and builds a block-average codec on top of them.
pub fn mock_backend(
    targets: Vec<(PromptId, ImageGrid)>,
    pull: f64,
    scale: usize,
    latent_channels: Option<usize>,
) -> Result<BuiltBackend, RunnerError> {
    let shape = targets
        .first()
        .map(|(_, t)| t.shape())
        .ok_or_else(|| RunnerError::Config("mock backend needs a target".into()))?;
    if let Some((p, t)) = targets.iter().find(|(_, t)| t.shape() != shape) {
        return Err(RunnerError::Config(format!(
            "mock target for {:?} is {:?}, others are {shape:?}",
            p.as_str(),
            t.shape()
        )));
    }
    let codec = match latent_channels {
        Some(k) => MockCodec::with_latent_channels(shape, scale, k),
        None => MockCodec::new(shape, scale),
    }
    .map_err(|e| RunnerError::Config(e.to_string()))?;
    let mock = MockDenoiser::new(targets)
        .with_pull(pull)
        .and_then(|m| m.with_codec(&codec))
        .map_err(|e| RunnerError::Config(e.to_string()))?;
    Ok(BuiltBackend {
        backend: Backend {
            denoiser: Arc::new(mock),
            codec: Some(Arc::new(codec)),
        },
        shape: Some(shape),
    })
}

impl BackendSpec {
    /// Relative target paths resolve against `base_dir`.
    pub fn build(&self, prompts: &[String], base_dir: &Path) -> Result<BuiltBackend, RunnerError> {
        match self {
            BackendSpec::Http { url } => {
                let remote = Arc::new(RemoteBackend::new(url).map_err(|e| RunnerError::Config(e.to_string()))?);
                Ok(BuiltBackend {
                    backend: Backend {
                        denoiser: remote.clone(),
                        codec: Some(remote),
                    },
                    shape: None,
                })
            }
            BackendSpec::Mock {
                targets,
                pull,
                scale,
                latent_channels,
            } => {
                if targets.len() != prompts.len() {
                    return Err(RunnerError::Config(format!(
                        "mock backend has {} target(s) for {} prompt(s); give one target per prompt",
                        targets.len(),
                        prompts.len()
                    )));
                }
                let loaded = prompts
                    .iter()
                    .zip(targets)
                    .map(|(p, path)| Ok((PromptId::new(p.clone()), load_png(&base_dir.join(path))?)))
                    .collect::<Result<Vec<_>, RunnerError>>()?;
                mock_backend(loaded, *pull, *scale, *latent_channels)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mock_options() {
        let spec: BackendSpec = "mock:target=a.png,target=b.png,pull=0.5,scale=2".parse().unwrap();
        assert_eq!(
            spec,
            BackendSpec::Mock {
                targets: vec!["a.png".into(), "b.png".into()],
                pull: 0.5,
                scale: 2,
                latent_channels: None,
            }
        );
        assert!(matches!(
            "http://127.0.0.1:9000".parse::<BackendSpec>().unwrap(),
            BackendSpec::Http { .. }
        ));
        assert!("mock:".parse::<BackendSpec>().is_err());
        assert!("mock:target=a.png,speed=2".parse::<BackendSpec>().is_err());
        assert!("grpc://x".parse::<BackendSpec>().is_err());
        assert!("mock:target=a.png,pull=x".parse::<BackendSpec>().is_err());
    }
}
