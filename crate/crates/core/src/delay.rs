/// Fixed integer-tick delay over a ring buffer.
///
/// `push` returns the sample pushed `delay` calls earlier, or zero while the
/// buffer is still priming. A zero-tick line passes samples straight through.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buffer: Vec<f64>,
    head: usize,
}

impl DelayLine {
    pub fn new(delay_ticks: usize) -> Self {
        Self {
            buffer: vec![0.0; delay_ticks],
            head: 0,
        }
    }

    /// Delay of `delay_ms` at `rate_hz`, rounded to whole ticks.
    pub fn from_millis(delay_ms: f64, rate_hz: u32) -> Self {
        Self::new(delay_ticks(delay_ms, rate_hz))
    }

    pub fn delay_ticks(&self) -> usize {
        self.buffer.len()
    }

    pub fn push(&mut self, sample: f64) -> f64 {
        if self.buffer.is_empty() {
            return sample;
        }
        let out = std::mem::replace(&mut self.buffer[self.head], sample);
        self.head = (self.head + 1) % self.buffer.len();
        out
    }

    pub fn reset(&mut self) {
        self.buffer.iter_mut().for_each(|s| *s = 0.0);
        self.head = 0;
    }
}

pub fn delay_ticks(delay_ms: f64, rate_hz: u32) -> usize {
    (delay_ms * f64::from(rate_hz) / 1000.0).round().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_delay_passes_through() {
        let mut line = DelayLine::new(0);
        assert_eq!(line.push(1.5), 1.5);
        assert_eq!(line.push(-2.0), -2.0);
    }

    #[test]
    fn impulse_emerges_after_delay() {
        let mut line = DelayLine::from_millis(50.0, 1000);
        assert_eq!(line.delay_ticks(), 50);
        let out: Vec<f64> = (0..120).map(|k| line.push(if k == 10 { 1.0 } else { 0.0 })).collect();
        let peak = out.iter().position(|&x| x == 1.0).unwrap();
        assert_eq!(peak, 60);
        assert_eq!(out.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn tick_rounding() {
        assert_eq!(delay_ticks(45.0, 1000), 45);
        assert_eq!(delay_ticks(50.0, 500), 25);
        assert_eq!(delay_ticks(1.4, 1000), 1);
        assert_eq!(delay_ticks(0.0, 1000), 0);
    }

    proptest! {
        #[test]
        fn output_is_shifted_input(delay in 0usize..80, input in proptest::collection::vec(-10.0f64..10.0, 1..300)) {
            let mut line = DelayLine::new(delay);
            for (k, &x) in input.iter().enumerate() {
                let y = line.push(x);
                let expected = if k >= delay { input[k - delay] } else { 0.0 };
                prop_assert_eq!(y, expected);
            }
        }

        #[test]
        fn cross_correlation_peaks_at_delay(delay in 0usize..60, seed in any::<u64>()) {
            // pseudo-random, zero-mean input so the autocorrelation is sharply peaked
            let mut state = seed | 1;
            let input: Vec<f64> = (0..400).map(|_| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state % 2001) as f64 / 1000.0 - 1.0
            }).collect();
            let mut line = DelayLine::new(delay);
            let output: Vec<f64> = input.iter().map(|&x| line.push(x)).collect();
            let best = (0..100usize).max_by(|&a, &b| {
                let c = |lag: usize| (lag..input.len()).map(|k| output[k] * input[k - lag]).sum::<f64>();
                c(a).partial_cmp(&c(b)).unwrap()
            }).unwrap();
            prop_assert_eq!(best, delay);
        }
    }
}
