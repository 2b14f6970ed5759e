//! L1 distance between log-mel spectrograms.

use std::sync::Arc;

use crate::dsp::{log_mel_f64, AudioBuffer, MelConfig, MelFilterbank, StftKernel, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::nn::{Tensor, Var};

/// Mean absolute difference of log10 mel energies (128 mels, 1024/256 at 44.1 kHz).
pub fn mel_recon_loss(original: &AudioBuffer, reconstructed: &AudioBuffer) -> Result<f64> {
    if original.sample_rate() != reconstructed.sample_rate() {
        return Err(Error::RateMismatch {
            expected: original.sample_rate(),
            actual: reconstructed.sample_rate(),
        });
    }
    if original.len() != reconstructed.len() {
        return Err(Error::ShapeMismatch(format!(
            "lengths differ: {} vs {}",
            original.len(),
            reconstructed.len()
        )));
    }
    original.require_non_empty()?;
    let config = MelConfig {
        sample_rate: original.sample_rate(),
        ..MelConfig::codec_loss_default()
    };
    let a = log_mel_f64(original.samples(), original.sample_rate(), &config)?;
    let b = log_mel_f64(reconstructed.samples(), reconstructed.sample_rate(), &config)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Differentiable form of [`mel_recon_loss`] against a fixed target.
#[derive(Debug, Clone)]
pub struct MelLoss {
    kernel: Arc<StftKernel>,
    filters: Tensor<f32>,
    config: MelConfig,
}

impl MelLoss {
    pub fn new(config: MelConfig) -> Result<Self> {
        let bank = MelFilterbank::new(&config)?;
        Ok(Self {
            kernel: Arc::new(StftKernel::new(config.stft_config()?)?),
            filters: Tensor::new(
                vec![bank.n_mels(), bank.bins()],
                bank.weights().iter().map(|&w| w as f32).collect(),
            )?,
            config,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    /// Target log-mel frames, `[frames, n_mels]`.
    pub fn target(&self, samples: &[f32]) -> Result<Tensor<f32>> {
        let log = log_mel_f64(samples, self.config.sample_rate, &self.config)?;
        Tensor::new(
            vec![log.len() / self.config.n_mels, self.config.n_mels],
            log.into_iter().map(|v| v as f32).collect(),
        )
    }

    /// Scalar loss between `signal: [len]` and precomputed target log-mels.
    pub fn forward<'g>(&self, signal: Var<'g, f32>, target: &Tensor<f32>) -> Var<'g, f32> {
        let g = signal.graph();
        let bins = self.kernel.config().bins();
        let spec = signal.stft(self.kernel.clone());
        let power = spec.slice_cols(0, bins).square().add(spec.slice_cols(bins, 2 * bins).square());
        let mel = power.matmul_nt(g.constant(self.filters.clone()));
        let log = mel.clamp(LOG_FLOOR as f32, f32::INFINITY).log10();
        log.sub(g.constant(target.clone())).abs().mean()
    }
}

/// Graph loss between a signal and a reference, at the codec loss settings.
pub fn mel_recon_loss_graph<'g>(signal: Var<'g, f32>, reference: &[f32], sample_rate: u32) -> Result<Var<'g, f32>> {
    let loss = MelLoss::new(MelConfig {
        sample_rate,
        ..MelConfig::codec_loss_default()
    })?;
    let target = loss.target(reference)?;
    Ok(loss.forward(signal, &target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Graph;

    fn tone(f: f64, n: usize) -> AudioBuffer {
        AudioBuffer::tone(f, 0.5, 0.3, n, 44_100).unwrap()
    }

    #[test]
    fn identical_is_zero_and_symmetric() {
        let a = tone(440.0, 8192);
        let b = tone(660.0, 8192);
        assert_eq!(mel_recon_loss(&a, &a).unwrap(), 0.0);
        let ab = mel_recon_loss(&a, &b).unwrap();
        assert!(ab > 0.0);
        assert_eq!(ab, mel_recon_loss(&b, &a).unwrap());
    }

    #[test]
    fn silence_reference_matches_floor_oracle() {
        let a = tone(1000.0, 4096);
        let silent = AudioBuffer::silence(4096, 44_100).unwrap();
        let cfg = MelConfig::codec_loss_default();
        let log = log_mel_f64(a.samples(), 44_100, &cfg).unwrap();
        let floor = LOG_FLOOR.log10();
        let want = log.iter().map(|v| (v - floor).abs()).sum::<f64>() / log.len() as f64;
        assert!((mel_recon_loss(&a, &silent).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn length_and_rate_mismatch() {
        let a = tone(440.0, 4096);
        assert!(matches!(mel_recon_loss(&a, &tone(440.0, 4095)), Err(Error::ShapeMismatch(_))));
        let other = AudioBuffer::silence(4096, 16_000).unwrap();
        assert!(matches!(mel_recon_loss(&a, &other), Err(Error::RateMismatch { .. })));
    }

    #[test]
    fn graph_loss_matches_direct_loss() {
        let a = tone(440.0, 8192);
        let b = tone(523.0, 8192);
        let g = Graph::inference();
        let y = g.constant(Tensor::new(vec![8192], b.samples().to_vec()).unwrap());
        let graph = mel_recon_loss_graph(y, a.samples(), 44_100).unwrap().item() as f64;
        let direct = mel_recon_loss(&a, &b).unwrap();
        assert!((graph - direct).abs() < 1e-3 * direct.max(1.0), "{graph} vs {direct}");
    }
}
