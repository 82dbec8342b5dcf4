use std::collections::HashMap;

use super::StlError;

/// Uniformly sampled multi-channel signal, `t_k = k * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    dt: f64,
    names: Vec<String>,
    index: HashMap<String, usize>,
    samples: Vec<Vec<f64>>,
}

impl Signal {
    pub fn new(dt: f64) -> Result<Self, StlError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StlError::InvalidSignal(format!(
                "sampling period must be positive, got {dt}"
            )));
        }
        Ok(Self {
            dt,
            names: Vec::new(),
            index: HashMap::new(),
            samples: Vec::new(),
        })
    }

    pub fn with_channel(
        mut self,
        name: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self, StlError> {
        self.push_channel(name, values)?;
        Ok(self)
    }

    pub fn push_channel(
        &mut self,
        name: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<(), StlError> {
        let name = name.into();
        if values.is_empty() {
            return Err(StlError::InvalidSignal(format!("channel `{name}` is empty")));
        }
        if let Some(first) = self.samples.first() {
            if first.len() != values.len() {
                return Err(StlError::InvalidSignal(format!(
                    "channel `{name}` has {} samples, expected {}",
                    values.len(),
                    first.len()
                )));
            }
        }
        if self.index.contains_key(&name) {
            return Err(StlError::InvalidSignal(format!(
                "duplicate channel `{name}`"
            )));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.samples.push(values);
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples per channel (0 for a signal without channels).
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channel_index(name).map(|i| self.samples[i].as_slice())
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.samples
    }

    /// Zero array with the same shape as the samples.
    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|c| vec![0.0; c.len()]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths() {
        let s = Signal::new(0.5)
            .unwrap()
            .with_channel("x", vec![1.0, 2.0])
            .unwrap();
        assert!(s.clone().with_channel("y", vec![1.0]).is_err());
        assert!(s.clone().with_channel("x", vec![1.0, 3.0]).is_err());
        assert_eq!(s.len(), 2);
        assert_eq!(s.time(1), 0.5);
    }

    #[test]
    fn rejects_bad_period() {
        assert!(Signal::new(0.0).is_err());
        assert!(Signal::new(f64::NAN).is_err());
    }
}
