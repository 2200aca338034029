//! Check the analytic gradients of all three objectives against central
//! finite differences on a small encoder.
//!
//! ```bash
//! cargo run -p sentigraph --example gradient_check
//! ```

use sentigraph::corpus::MASK;
use sentigraph::encoder::{EncoderConfig, EncoderParams, Gradients};
use sentigraph::objectives::{
    joint_loss, loss_ap, loss_ns, loss_sw, ContrastiveSet, MaskedSequence, PairSequence,
};

fn max_rel_error(
    params: &EncoderParams,
    analytic: &Gradients,
    loss_of: &dyn Fn(&EncoderParams) -> f64,
) -> f64 {
    let h = 1e-4;
    let flat = params.to_flat();
    let grads = analytic.to_flat();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for idx in 0..flat.len() {
        let mut plus = flat.clone();
        plus[idx] += h;
        probe.load_flat(&plus).unwrap();
        let up = loss_of(&probe);
        let mut minus = flat.clone();
        minus[idx] -= h;
        probe.load_flat(&minus).unwrap();
        let down = loss_of(&probe);
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - grads[idx]).abs() / numeric.abs().max(grads[idx].abs()).max(1e-5);
        worst = worst.max(rel);
    }
    worst
}

fn main() -> sentigraph::Result<()> {
    let config = EncoderConfig {
        vocab_size: 16,
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        max_len: 10,
        seed: 7,
    };
    let params = EncoderParams::init(config)?;
    println!("encoder: {} parameters", params.n_params());

    let masked = vec![MaskedSequence {
        ids: vec![2, MASK, 7, 9, 3],
        mask: vec![false, true, false, false, false],
        originals: vec![(1, 6)],
    }];
    let pairs = vec![PairSequence {
        ids: vec![2, 7, 8, 3, 10, 3],
        label: true,
    }];
    let sets = vec![ContrastiveSet {
        anchor: vec![9],
        positives: vec![vec![10]],
        negatives: vec![vec![11], vec![13]],
    }];

    let (value, grads) = loss_sw(&params, &masked)?;
    let rel = max_rel_error(&params, &grads, &|p| loss_sw(p, &masked).unwrap().0);
    println!(
        "sentiment masking   loss {:8.4}  max rel err {:.3e}",
        value, rel
    );

    let (value, grads) = loss_ap(&params, &pairs)?;
    let rel = max_rel_error(&params, &grads, &|p| loss_ap(p, &pairs).unwrap().0);
    println!(
        "pair prediction     loss {:8.4}  max rel err {:.3e}",
        value, rel
    );

    let (value, grads) = loss_ns(&params, &sets)?;
    let rel = max_rel_error(&params, &grads, &|p| loss_ns(p, &sets).unwrap().0);
    println!(
        "node similarity     loss {:8.4}  max rel err {:.3e}",
        value, rel
    );

    let (joint, grads) = joint_loss(&params, &masked, &pairs, &sets)?;
    let rel = max_rel_error(&params, &grads, &|p| {
        joint_loss(p, &masked, &pairs, &sets).unwrap().0.total()
    });
    println!(
        "joint               loss {:8.4}  max rel err {:.3e}",
        joint.total(),
        rel
    );
    Ok(())
}
