//! Inputs shared by the benchmarks.

/// Deterministic periodic series with a little noise, like a bucketed
/// utilization trace.
pub fn utilization_series(len: usize) -> Vec<f64> {
    let mut state: u32 = 0x2545_f491;
    (0..len)
        .map(|t| {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            let noise = f64::from(state % 1000) / 1000.0 - 0.5;
            80.0 + 15.0 * (t as f64 * std::f64::consts::TAU / 24.0).sin() + noise
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn series_is_deterministic() {
        assert_eq!(super::utilization_series(50), super::utilization_series(50));
        assert_eq!(super::utilization_series(7).len(), 7);
    }
}
