use crate::error::{FpError, Result};
use crate::field::RealGrid;
use crate::optics::OpticalConfig;

/// Captured (or simulated) intensity stack, one image per illumination in
/// manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: OpticalConfig,
    pub images: Vec<RealGrid>,
    /// Clip level the captures were saturated at, if known.
    pub saturation: Option<f64>,
}

impl Dataset {
    pub fn new(config: OpticalConfig, images: Vec<RealGrid>, saturation: Option<f64>) -> Result<Self> {
        let ds = Dataset {
            config,
            images,
            saturation,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.images.len() != self.config.illuminations.len() {
            return Err(FpError::InvalidConfig(format!(
                "{} images for {} illuminations",
                self.images.len(),
                self.config.illuminations.len()
            )));
        }
        for img in &self.images {
            if img.dims() != self.config.low_dims() {
                return Err(FpError::DimensionMismatch {
                    expected: self.config.low_dims(),
                    actual: img.dims(),
                });
            }
        }
        if let Some(s) = self.saturation {
            if !(s > 0.0) {
                return Err(FpError::InvalidConfig(format!("saturation must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Index of the illumination closest to the optical axis (first on ties).
    pub fn central_index(&self) -> usize {
        central_index(&self.config)
    }
}

pub(crate) fn central_index(cfg: &OpticalConfig) -> usize {
    let mut best = 0;
    let mut best_s2 = f64::INFINITY;
    for (i, ill) in cfg.illuminations.iter().enumerate() {
        let s2 = ill.sx * ill.sx + ill.sy * ill.sy;
        if s2 < best_s2 {
            best = i;
            best_s2 = s2;
        }
    }
    best
}
