//! Phase-competition Q-network with neighbor attention, written out by hand with an
//! explicit reverse pass.

mod gradcheck;
mod model;
mod params;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, Fault, GradCheckReport, SAMPLES_PER_TENSOR};
pub use model::{
    attention_pass, backward, demand_embedding, demand_pass, forward, forward_cached, neighbor_attention,
    pair_pass, pair_scores, AttentionPass, DemandPass, ForwardCache, MovementFeatures, PairPass,
    PhaseLayout,
};
pub use params::{Activation, FrapConfig, ParamStore, MOVEMENT_FEATURES, PARAM_NAMES, RELATION_CLASSES};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_obs(rng: &mut ChaCha8Rng, m: usize) -> Vec<MovementFeatures> {
        let load: f64 = rng.random();
        (0..m)
            .map(|_| [load * rng.random::<f64>(), load * rng.random::<f64>(), f64::from(rng.random_bool(0.5) as u8)])
            .collect()
    }

    #[test]
    fn linear_network_gradients_are_exact() {
        // Without neighbors the softmax is constant, so with identity activations Q is
        // linear in every single parameter and central differences are exact.
        let cfg = FrapConfig { activation: Activation::Identity, ..FrapConfig::default() };
        let (net, _) = scenarios::single().unwrap();
        let layout = PhaseLayout::from_intersection(&net.intersections[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ParamStore::init(&cfg, &mut rng);
        let f = random_obs(&mut rng, layout.movements);
        let r = gradient_check(&params, &cfg, &layout, &f, &[], 1e-5, Fault::None, &mut rng).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn default_network_gradients_match_finite_differences() {
        let cfg = FrapConfig::default();
        let (net, _) = scenarios::single().unwrap();
        let layout = PhaseLayout::from_intersection(&net.intersections[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = ParamStore::init(&cfg, &mut rng);
        let f = random_obs(&mut rng, layout.movements);
        let nbs: Vec<_> = (0..4).map(|_| random_obs(&mut rng, layout.movements)).collect();
        let refs: Vec<&[MovementFeatures]> = nbs.iter().map(|v| v.as_slice()).collect();
        let r = gradient_check(&params, &cfg, &layout, &f, &refs, 1e-5, Fault::None, &mut rng).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert!(r.checked > 13);
        let r = gradient_check(&params, &cfg, &layout, &f, &refs, 1e-5, Fault::ZeroLargest, &mut rng).unwrap();
        assert!(r.max_rel_error > 1e-2, "{r:?}");
    }
}
