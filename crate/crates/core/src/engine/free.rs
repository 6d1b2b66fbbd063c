use rayon::prelude::*;

use super::{Arrangement, Engine, EngineError, InitKind, Mode, OutputCombination, RunResult, Snapshot, StepRecord};
use crate::denoiser::DenoiseSession;
use crate::image::ImageGrid;
use crate::rng::{derive_seed, normal_field, uniform_field, INIT_STREAM};
use crate::schedule::{fixed_ratio_weights, mix, NoiseSchedule};
use crate::transform::TransformSpec;

/// One joint denoise update of the shared-frame state `x_t` at position `t`.
///
/// Each prompt sees `x_t` through its transform; its guidance is pulled back
/// through the inverse transform, the fields are averaged plainly, and a
/// single update is applied to `x_t`.
pub fn anagram_step(
    x_t: &ImageGrid,
    transforms: &[TransformSpec],
    sessions: &[DenoiseSession],
    t: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<ImageGrid, EngineError> {
    if transforms.is_empty() || transforms.len() != sessions.len() {
        return Err(EngineError::Config(format!(
            "{} transforms for {} sessions",
            transforms.len(),
            sessions.len()
        )));
    }
    let fields = (0..sessions.len())
        .into_par_iter()
        .map(|i| {
            let view = transforms[i].apply(x_t)?;
            let resp = sessions[i].guidance_step(&view, t, schedule, derive_seed(seed, t as u32, 2 * i as u32))?;
            Ok(transforms[i].invert().apply(&resp.guidance)?)
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    let g = ImageGrid::mean_of(&fields)?;
    Ok(schedule.step(x_t, &g, t)?)
}

impl Engine {
    /// Free pixel mode: lookahead rollouts, matching against the first
    /// prompt's idealized image, then one joint update.
    pub fn mainline_free(&self) -> Result<RunResult, EngineError> {
        self.free_loop(false)
    }

    /// Latent modes: noise is mixed in after encoding at a fixed ratio, every
    /// rollout spans the whole rollout schedule, and matching happens on the
    /// decoded pixels.
    pub fn mainline_latent(&self) -> Result<RunResult, EngineError> {
        match self.config.mode {
            Mode::FreeLatent => self.free_loop(true),
            Mode::FixedLatent => self.fixed_loop(true),
            other => Err(EngineError::Config(format!("{other} is not a latent mode"))),
        }
    }

    /// Pixel-space idealized image after a full latent rollout from `img`.
    pub(super) fn latent_rollout(
        &self,
        img: &ImageGrid,
        t: usize,
        stream: u32,
        session: &DenoiseSession,
    ) -> Result<ImageGrid, EngineError> {
        let seed = self.config.seed;
        let z = self.encode(img)?;
        let eps = normal_field(seed, t as u32, stream, z.shape());
        let w = fixed_ratio_weights(self.config.mixing_ratio, &self.rollout)?;
        let z0 = mix(&z, &eps, w)?;
        let steps = self.rollout.steps();
        let zq = session.rollout(&z0, steps, 0, &self.rollout, derive_seed(seed, t as u32, stream))?;
        self.decode(&zq)
    }

    fn lookahead(&self, img: &ImageGrid, t: usize, i: usize) -> Result<ImageGrid, EngineError> {
        let l = self.config.rollout_steps_or_default();
        let end = t.saturating_sub(l);
        let seed = derive_seed(self.config.seed, t as u32, 2 * i as u32 + 1);
        let session = &self.sessions[i];
        let y = session.rollout(img, t, end, &self.mainline, seed)?;
        Ok(session.clean_estimate(&y, end, &self.mainline, seed)?)
    }

    fn free_loop(&self, latent: bool) -> Result<RunResult, EngineError> {
        let cfg = &self.config;
        let n = self.sessions.len();
        let steps = cfg.mainline_steps;
        let shape = self.geometry.shape;
        let mut x = if latent {
            uniform_field(cfg.seed, steps as u32, INIT_STREAM, shape)
        } else {
            normal_field(cfg.seed, steps as u32, INIT_STREAM, shape)
        };
        let mut psi: Vec<TransformSpec> = (0..n)
            .map(|i| {
                if i > 0 && cfg.init == InitKind::Random {
                    self.geometry.random(cfg.seed, i as u32)
                } else {
                    self.geometry.identity()
                }
            })
            .collect();

        let mut records = Vec::with_capacity(steps);
        let mut snapshots = Vec::new();
        for t in (1..=steps).rev() {
            let need_rollouts = latent || cfg.dynamic_matching || self.record_snapshots;
            let (inputs, rollouts): (Vec<ImageGrid>, Vec<ImageGrid>) = if need_rollouts {
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let input = psi[i].apply(&x)?;
                        let q = if latent {
                            self.latent_rollout(&input, t, i as u32, &self.sessions[i])?
                        } else {
                            self.lookahead(&input, t, i)?
                        };
                        Ok((input, q))
                    })
                    .collect::<Result<Vec<_>, EngineError>>()?
                    .into_iter()
                    .unzip()
            } else {
                (Vec::new(), Vec::new())
            };

            let mut record = StepRecord {
                t,
                changes: vec![0; n],
                energies: vec![0.0; n],
                retained_energies: vec![0.0; n],
            };
            let mut next_psi = psi.clone();
            if cfg.dynamic_matching {
                let fits = (1..n)
                    .into_par_iter()
                    .map(|i| self.geometry.fit(&rollouts[0], &rollouts[i], &psi[i]))
                    .collect::<Result<Vec<_>, EngineError>>()?;
                for (k, m) in fits.into_iter().enumerate() {
                    let i = k + 1;
                    let old = Arrangement::Transform { transform: psi[i].clone() };
                    record.changes[i] = m.arrangement.changes_from(&old);
                    record.energies[i] = m.energy;
                    record.retained_energies[i] = m.retained_energy;
                    next_psi[i] = m.arrangement.transform().expect("fits yield transforms").clone();
                }
            }
            records.push(record);

            x = if latent {
                combine(&rollouts, &psi, &next_psi, cfg.output_combination)?
            } else {
                anagram_step(&x, &next_psi, &self.sessions, t, &self.mainline, cfg.seed)?
            };
            if self.record_snapshots {
                snapshots.push(Snapshot { t, inputs, rollouts });
            }
            psi = next_psi;
        }

        let images = psi
            .iter()
            .map(|p| Ok(p.apply(&x)?.to_pixels_clamped()))
            .collect::<Result<Vec<_>, EngineError>>()?;
        Ok(RunResult {
            images,
            arrangements: psi.into_iter().map(|transform| Arrangement::Transform { transform }).collect(),
            base: Some(x),
            steps: records,
            snapshots,
        })
    }
}

/// Next latent-mode mainline state from the decoded rollouts: the first one,
/// or the mean of all of them pulled back through the transforms they were
/// produced under, then carried into the first prompt's new frame.
fn combine(
    rollouts: &[ImageGrid],
    old: &[TransformSpec],
    new: &[TransformSpec],
    how: OutputCombination,
) -> Result<ImageGrid, EngineError> {
    let count = match how {
        OutputCombination::FirstRollout => 1,
        OutputCombination::Averaged => rollouts.len(),
    };
    let pulled = (0..count)
        .map(|i| Ok(old[i].invert().apply(&rollouts[i])?))
        .collect::<Result<Vec<_>, EngineError>>()?;
    Ok(new[0].apply(&ImageGrid::mean_of(&pulled)?)?)
}
