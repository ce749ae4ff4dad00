use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optics::Pulse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub transmittance: f64,
    /// Probability that the channel flips the polarization within its basis.
    pub excess_error: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { transmittance: 1.0, excess_error: 0.0 }
    }
}

impl ChannelConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.transmittance > 0.0 && self.transmittance <= 1.0) {
            v.push(format!("channel.transmittance must be in (0, 1], got {}", self.transmittance));
        }
        if !(0.0..=1.0).contains(&self.excess_error) {
            v.push(format!("channel.excess_error must be in [0, 1], got {}", self.excess_error));
        }
        v
    }
}

/// Attenuate by the channel and apply its bit-flip error. Draws one uniform.
pub fn channel_transmit<R: Rng + ?Sized>(pulse: Pulse, config: &ChannelConfig, rng: &mut R) -> Pulse {
    let flip = rng.random::<f64>() < config.excess_error;
    let mut out = if config.transmittance == 1.0 { pulse } else { pulse.attenuated(config.transmittance) };
    if flip {
        out.polarization = out.polarization.rotated(90.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::Polarization;
    use crate::rng::RngStreams;

    #[test]
    fn identity_and_attenuation() {
        let mut rng = RngStreams::new(1).stream("ch");
        let p = Pulse::quantum(3, 0.4, Polarization::new(45.0).unwrap());
        assert_eq!(channel_transmit(p.clone(), &ChannelConfig::default(), &mut rng), p);
        let cfg = ChannelConfig { transmittance: 0.25, excess_error: 0.0 };
        let out = channel_transmit(p, &cfg, &mut rng);
        assert!((out.mean_photons - 0.1).abs() < 1e-15);
    }

    #[test]
    fn flip_rate() {
        let mut rng = RngStreams::new(2).stream("ch");
        let cfg = ChannelConfig { transmittance: 1.0, excess_error: 0.02 };
        let n = 100_000;
        let flips = (0..n)
            .filter(|_| {
                let p = Pulse::quantum(0, 0.5, Polarization::new(0.0).unwrap());
                channel_transmit(p, &cfg, &mut rng).polarization.angle() == 90.0
            })
            .count();
        let f = flips as f64 / n as f64;
        assert!((f - 0.02).abs() < 3.0 * (0.02 * 0.98 / n as f64).sqrt() + 1e-4, "{f}");
    }
}
