/// Divides rewards by a running standard deviation of the discounted
/// return, tracked per reward stream. Scaled rewards are clipped to
/// `[-CLIP, CLIP]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardScaler {
    gamma: f64,
    returns: Vec<f64>,
    count: f64,
    mean: f64,
    m2: f64,
}

impl RewardScaler {
    pub const CLIP: f64 = 10.0;

    pub fn new(streams: usize, gamma: f64) -> Self {
        Self { gamma, returns: vec![0.0; streams], count: 0.0, mean: 0.0, m2: 0.0 }
    }

    /// Feeds one reward of `stream` and returns it scaled. `done` ends the
    /// stream's current return.
    pub fn scale(&mut self, stream: usize, reward: f64, done: bool) -> f64 {
        let ret = self.returns[stream] * self.gamma + reward;
        self.count += 1.0;
        let delta = ret - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (ret - self.mean);
        self.returns[stream] = if done { 0.0 } else { ret };
        (reward / (self.std() + 1e-8)).clamp(-Self::CLIP, Self::CLIP)
    }

    pub fn std(&self) -> f64 {
        let std = if self.count < 2.0 { 0.0 } else { (self.m2 / self.count).sqrt() };
        if std > 1e-6 { std } else { 1.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rewards_converge_to_return_spread() {
        let mut s = RewardScaler::new(1, 0.0);
        s.scale(0, 1.0, false);
        s.scale(0, 3.0, false);
        assert!((s.std() - 1.0).abs() < 1e-12);
        assert!((s.scale(0, 2.0, true) - 2.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-7);
    }

    #[test]
    fn degenerate_spread_does_not_blow_up() {
        let mut s = RewardScaler::new(3, 0.99);
        for i in 0..3 {
            assert!((s.scale(i, -0.5, false) + 0.5).abs() < 1e-7);
        }
        let mut s = RewardScaler::new(1, 0.0);
        s.scale(0, 1.0, false);
        assert_eq!(s.scale(0, 1.0 + 1e-5, false), RewardScaler::CLIP);
    }

    #[test]
    fn done_resets_the_return() {
        let mut s = RewardScaler::new(2, 0.5);
        s.scale(0, 1.0, true);
        s.scale(1, 1.0, false);
        assert_eq!(s.returns, vec![0.0, 1.0]);
    }
}
