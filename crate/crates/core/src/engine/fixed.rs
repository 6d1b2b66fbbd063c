use rayon::prelude::*;

use super::{Arrangement, Engine, EngineError, Matched, RunResult, Snapshot, StepRecord};
use crate::image::ImageGrid;
use crate::rng::{derive_seed, normal_field, prompt_stream};
use crate::schedule::mix;
use crate::transform::TileSelection;

impl Engine {
    /// Fixed-source pixel mode: re-noise the arranged source, roll out to
    /// completion, and re-match the result's tiles against the source.
    pub fn mainline_fixed(&self) -> Result<RunResult, EngineError> {
        self.fixed_loop(false)
    }

    fn initial_arrangement(&self) -> Result<Arrangement, EngineError> {
        Ok(match (&self.copies, self.geometry.tiling) {
            (Some(_), Some(tiling)) => Arrangement::Selection {
                selection: TileSelection::new(tiling, self.sources.len(), (0..tiling.tile_count()).collect())?,
            },
            _ => Arrangement::Transform {
                transform: self.geometry.identity(),
            },
        })
    }

    fn rematch(&self, q: &ImageGrid, previous: &Arrangement) -> Result<Matched, EngineError> {
        match (previous, &self.copies) {
            (Arrangement::Selection { selection }, Some(copies)) => {
                self.geometry.fit_selection(&self.sources, q, copies, selection)
            }
            (Arrangement::Transform { transform }, None) => self.geometry.fit(&self.sources[0], q, transform),
            _ => unreachable!("arrangement kind is fixed for the whole run"),
        }
    }

    /// Idealized image for one prompt at position `t`. Streams are keyed by
    /// the prompt text, so a prompt's run does not depend on its neighbours.
    fn fixed_rollout(&self, input: &ImageGrid, t: usize, i: usize, latent: bool) -> Result<ImageGrid, EngineError> {
        let stream = prompt_stream(&self.config.prompts[i]);
        let session = &self.sessions[i];
        if latent {
            return self.latent_rollout(input, t, stream, session);
        }
        let seed = self.config.seed;
        let eps = normal_field(seed, t as u32, stream, input.shape());
        let x = mix(input, &eps, self.mainline.weights_at(t - 1)?)?;
        Ok(session.rollout(&x, t, 0, &self.mainline, derive_seed(seed, t as u32, stream))?)
    }

    pub(super) fn fixed_loop(&self, latent: bool) -> Result<RunResult, EngineError> {
        let cfg = &self.config;
        let n = self.sessions.len();
        let steps = cfg.mainline_steps;
        let mut arrangements = (0..n)
            .map(|_| self.initial_arrangement())
            .collect::<Result<Vec<_>, _>>()?;

        let mut records = Vec::with_capacity(steps);
        let mut snapshots = Vec::new();
        for t in (1..=steps).rev() {
            let outcomes = (0..n)
                .into_par_iter()
                .map(|i| {
                    let input = arrangements[i].render(&self.sources)?;
                    let q = self.fixed_rollout(&input, t, i, latent)?;
                    let matched = if cfg.dynamic_matching {
                        Some(self.rematch(&q, &arrangements[i])?)
                    } else {
                        None
                    };
                    Ok((input, q, matched))
                })
                .collect::<Result<Vec<_>, EngineError>>()?;

            let mut record = StepRecord {
                t,
                changes: vec![0; n],
                energies: vec![0.0; n],
                retained_energies: vec![0.0; n],
            };
            let mut inputs = Vec::new();
            let mut rollouts = Vec::new();
            for (i, (input, q, matched)) in outcomes.into_iter().enumerate() {
                if let Some(m) = matched {
                    record.changes[i] = m.arrangement.changes_from(&arrangements[i]);
                    record.energies[i] = m.energy;
                    record.retained_energies[i] = m.retained_energy;
                    arrangements[i] = m.arrangement;
                }
                if self.record_snapshots {
                    inputs.push(input);
                    rollouts.push(q);
                }
            }
            records.push(record);
            if self.record_snapshots {
                snapshots.push(Snapshot { t, inputs, rollouts });
            }
        }

        let images = arrangements
            .iter()
            .map(|a| a.render(&self.sources))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RunResult {
            images,
            arrangements,
            base: None,
            steps: records,
            snapshots,
        })
    }
}
