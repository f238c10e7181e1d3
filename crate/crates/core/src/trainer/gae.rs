//! Generalized advantage estimation.

/// Advantages and returns for one environment's step sequence.
///
/// `next_values[t]` is the value estimate of the state reached by step `t`
/// (the value of the next buffer entry, or of the final observation when the
/// episode was truncated). `terminated[t]` drops that bootstrap; `ends[t]`
/// marks an episode boundary after step `t` and cuts the λ-recursion.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && next_values.len() == n && terminated.len() == n && ends.len() == n);
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let boot = if terminated[t] { 0.0 } else { gamma * next_values[t] };
        let delta = rewards[t] + boot - values[t];
        if ends[t] || terminated[t] {
            running = 0.0;
        }
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
pub fn normalize(values: &mut [f64]) {
    let n = values.len();
    if n == 0 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
    values.iter_mut().for_each(|v| *v = (*v - mean) * scale);
}
