//! Finite-difference validation of every graph primitive on randomized shapes.
//!
//! Each case builds a scalar loss from seeded random inputs, computes the
//! analytic gradient with `backward`, and checks it against a central-difference
//! oracle that only ever evaluates the forward pass.

use headprune::gradcheck::{fd_gradients, max_rel_err};
use headprune::graph::{Graph, TensorId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-6;

type Build = Box<dyn Fn(&mut Graph, &[TensorId]) -> TensorId>;

struct Case {
    name: &'static str,
    params: Vec<(Vec<usize>, Vec<f64>)>,
    build: Build,
}

fn fill(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn rand_shape(rng: &mut ChaCha8Rng, max_rank: usize) -> Vec<usize> {
    let rank = rng.random_range(1..=max_rank);
    (0..rank).map(|_| rng.random_range(1..=4)).collect()
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Weighted scalar readout so every output element carries a distinct gradient.
fn weighted_sum(g: &mut Graph, y: TensorId, weights: &[f64]) -> TensorId {
    let shape = g.shape(y).to_vec();
    let w = g.constant(weights.to_vec(), shape).unwrap();
    let prod = g.mul(y, w).unwrap();
    g.sum(prod)
}

fn check(case: &Case) {
    let shapes: Vec<Vec<usize>> = case.params.iter().map(|(s, _)| s.clone()).collect();
    let datas: Vec<Vec<f64>> = case.params.iter().map(|(_, d)| d.clone()).collect();

    let build = &case.build;
    let mut eval = |vals: &[Vec<f64>]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<TensorId> = vals
            .iter()
            .zip(&shapes)
            .map(|(d, s)| g.leaf(d.clone(), s.clone(), true).unwrap())
            .collect();
        let loss = build(&mut g, &ids);
        g.scalar_value(loss)
    };
    let numeric = fd_gradients(&mut eval, &datas, EPS);

    let mut g = Graph::new();
    let ids: Vec<TensorId> = datas
        .iter()
        .zip(&shapes)
        .map(|(d, s)| g.leaf(d.clone(), s.clone(), true).unwrap())
        .collect();
    let loss = build(&mut g, &ids);
    g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| g.grad(id).unwrap().to_vec()).collect();

    let err = max_rel_err(&analytic, &numeric);
    assert!(err < TOL, "{}: max relative error {err:.3e}", case.name);
}

fn unary_case(
    name: &'static str,
    rng: &mut ChaCha8Rng,
    lo: f64,
    hi: f64,
    apply: impl Fn(&mut Graph, TensorId) -> TensorId + 'static,
) -> Case {
    let shape = rand_shape(rng, 3);
    let n = numel(&shape);
    let data = fill(rng, n, lo, hi);
    let w = fill(rng, n, -1.0, 1.0);
    Case {
        name,
        params: vec![(shape, data)],
        build: Box::new(move |g, ids| {
            let y = apply(g, ids[0]);
            weighted_sum(g, y, &w)
        }),
    }
}

fn binary_case(
    name: &'static str,
    rng: &mut ChaCha8Rng,
    apply: impl Fn(&mut Graph, TensorId, TensorId) -> TensorId + 'static,
) -> Case {
    let shape = rand_shape(rng, 3);
    let n = numel(&shape);
    let a = fill(rng, n, -1.0, 1.0);
    let b = fill(rng, n, -1.0, 1.0);
    let w = fill(rng, n, -1.0, 1.0);
    Case {
        name,
        params: vec![(shape.clone(), a), (shape, b)],
        build: Box::new(move |g, ids| {
            let y = apply(g, ids[0], ids[1]);
            weighted_sum(g, y, &w)
        }),
    }
}

fn all_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    cases.push(binary_case("add", &mut rng, |g, a, b| g.add(a, b).unwrap()));
    cases.push(binary_case("sub", &mut rng, |g, a, b| g.sub(a, b).unwrap()));
    cases.push(binary_case("mul", &mut rng, |g, a, b| g.mul(a, b).unwrap()));

    {
        let (m, k, n) = (
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        );
        let a = fill(&mut rng, m * k, -1.0, 1.0);
        let b = fill(&mut rng, k * n, -1.0, 1.0);
        let w = fill(&mut rng, m * n, -1.0, 1.0);
        cases.push(Case {
            name: "matmul",
            params: vec![(vec![m, k], a), (vec![k, n], b)],
            build: Box::new(move |g, ids| {
                let y = g.matmul(ids[0], ids[1]).unwrap();
                weighted_sum(g, y, &w)
            }),
        });
    }

    {
        let (r, c) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let a = fill(&mut rng, r * c, -1.0, 1.0);
        let w = fill(&mut rng, r * c, -1.0, 1.0);
        cases.push(Case {
            name: "transpose",
            params: vec![(vec![r, c], a)],
            build: Box::new(move |g, ids| {
                let y = g.transpose(ids[0]).unwrap();
                weighted_sum(g, y, &w)
            }),
        });
    }

    for (name, is_add) in [("add_bias", true), ("mul_bias", false)] {
        let (r, c) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let x = fill(&mut rng, r * c, -1.0, 1.0);
        let b = fill(&mut rng, c, -1.0, 1.0);
        let w = fill(&mut rng, r * c, -1.0, 1.0);
        cases.push(Case {
            name,
            params: vec![(vec![r, c], x), (vec![c], b)],
            build: Box::new(move |g, ids| {
                let y = if is_add {
                    g.add_bias(ids[0], ids[1]).unwrap()
                } else {
                    g.mul_bias(ids[0], ids[1]).unwrap()
                };
                weighted_sum(g, y, &w)
            }),
        });
    }

    cases.push(unary_case("scale", &mut rng, -1.0, 1.0, |g, x| {
        g.scale(x, -2.75)
    }));
    cases.push(unary_case("add_scalar", &mut rng, -1.0, 1.0, |g, x| {
        g.add_scalar(x, 0.6)
    }));
    // Inputs kept away from the clamp boundaries so the derivative exists.
    cases.push(unary_case("clamp_inside", &mut rng, -0.4, 0.4, |g, x| {
        g.clamp(x, -0.5, 0.5)
    }));
    cases.push(unary_case("clamp_above", &mut rng, 0.6, 1.4, |g, x| {
        g.clamp(x, -0.5, 0.5)
    }));
    cases.push(unary_case("tanh", &mut rng, -2.0, 2.0, |g, x| g.tanh(x)));
    cases.push(unary_case("sigmoid", &mut rng, -2.0, 2.0, |g, x| g.sigmoid(x)));
    cases.push(unary_case("exp", &mut rng, -1.5, 1.5, |g, x| g.exp(x)));
    cases.push(unary_case("ln", &mut rng, 0.2, 2.5, |g, x| g.ln(x)));
    cases.push(unary_case("gelu", &mut rng, -2.0, 2.0, |g, x| g.gelu(x)));

    {
        let (r, c) = (rng.random_range(1..=3), rng.random_range(2..=5));
        let x = fill(&mut rng, r * c, -2.0, 2.0);
        let w = fill(&mut rng, r * c, -1.0, 1.0);
        cases.push(Case {
            name: "softmax_rows",
            params: vec![(vec![r, c], x)],
            build: Box::new(move |g, ids| {
                let y = g.softmax_rows(ids[0], None).unwrap();
                weighted_sum(g, y, &w)
            }),
        });
    }

    {
        let (r, c) = (rng.random_range(1..=3), rng.random_range(3..=5));
        let x = fill(&mut rng, r * c, -2.0, 2.0);
        let w = fill(&mut rng, r * c, -1.0, 1.0);
        let mut mask = vec![0.0; c];
        mask[c - 1] = -1e9;
        cases.push(Case {
            name: "softmax_rows_masked",
            params: vec![(vec![r, c], x)],
            build: Box::new(move |g, ids| {
                let y = g.softmax_rows(ids[0], Some(&mask)).unwrap();
                weighted_sum(g, y, &w)
            }),
        });
    }

    {
        let (r, c) = (rng.random_range(1..=3), rng.random_range(2..=6));
        let x = fill(&mut rng, r * c, -2.0, 2.0);
        let w = fill(&mut rng, r * c, -1.0, 1.0);
        cases.push(Case {
            name: "normalize",
            params: vec![(vec![r, c], x)],
            build: Box::new(move |g, ids| {
                let y = g.normalize(ids[0], 1e-5).unwrap();
                weighted_sum(g, y, &w)
            }),
        });
    }

    {
        let r = rng.random_range(1..=3);
        let widths = [
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
        ];
        let parts: Vec<(Vec<usize>, Vec<f64>)> = widths
            .iter()
            .map(|&wd| (vec![r, wd], fill(&mut rng, r * wd, -1.0, 1.0)))
            .collect();
        let total: usize = widths.iter().sum();
        let w = fill(&mut rng, r * total, -1.0, 1.0);
        cases.push(Case {
            name: "concat_cols",
            params: parts,
            build: Box::new(move |g, ids| {
                let y = g.concat_cols(ids).unwrap();
                weighted_sum(g, y, &w)
            }),
        });
    }

    {
        let (r, c) = (rng.random_range(2..=5), rng.random_range(1..=3));
        let start = rng.random_range(0..r - 1);
        let end = rng.random_range(start + 1..=r);
        let x = fill(&mut rng, r * c, -1.0, 1.0);
        let w = fill(&mut rng, (end - start) * c, -1.0, 1.0);
        cases.push(Case {
            name: "slice_rows",
            params: vec![(vec![r, c], x)],
            build: Box::new(move |g, ids| {
                let y = g.slice_rows(ids[0], start, end).unwrap();
                weighted_sum(g, y, &w)
            }),
        });
    }

    for (name, use_mean) in [("sum", false), ("mean", true)] {
        let shape = rand_shape(&mut rng, 3);
        let x = fill(&mut rng, numel(&shape), -1.0, 1.0);
        cases.push(Case {
            name,
            params: vec![(shape, x)],
            build: Box::new(move |g, ids| {
                let s = if use_mean { g.mean(ids[0]) } else { g.sum(ids[0]) };
                g.tanh(s)
            }),
        });
    }

    {
        let (v, d) = (rng.random_range(3..=6), rng.random_range(1..=4));
        let table = fill(&mut rng, v * d, -1.0, 1.0);
        let ids: Vec<usize> = (0..rng.random_range(2..=6))
            .map(|_| rng.random_range(0..v))
            .collect();
        let w = fill(&mut rng, ids.len() * d, -1.0, 1.0);
        cases.push(Case {
            name: "embed",
            params: vec![(vec![v, d], table)],
            build: Box::new(move |g, leaves| {
                let y = g.embed(leaves[0], &ids).unwrap();
                weighted_sum(g, y, &w)
            }),
        });
    }

    // Composites chaining several primitives through one readout.
    {
        let (s, d) = (rng.random_range(2..=4), rng.random_range(2..=4));
        let q = fill(&mut rng, s * d, -1.0, 1.0);
        let k = fill(&mut rng, s * d, -1.0, 1.0);
        let v = fill(&mut rng, s * d, -1.0, 1.0);
        let w = fill(&mut rng, s * d, -1.0, 1.0);
        let inv = 1.0 / (d as f64).sqrt();
        cases.push(Case {
            name: "attention_composite",
            params: vec![(vec![s, d], q), (vec![s, d], k), (vec![s, d], v)],
            build: Box::new(move |g, ids| {
                let kt = g.transpose(ids[1]).unwrap();
                let scores = g.matmul(ids[0], kt).unwrap();
                let scaled = g.scale(scores, inv);
                let attn = g.softmax_rows(scaled, None).unwrap();
                let ctx = g.matmul(attn, ids[2]).unwrap();
                weighted_sum(g, ctx, &w)
            }),
        });
    }

    {
        let d = rng.random_range(2..=4);
        let x = fill(&mut rng, d, -1.0, 1.0);
        let wi = fill(&mut rng, d * d, -1.0, 1.0);
        let w = fill(&mut rng, d, -1.0, 1.0);
        cases.push(Case {
            name: "gated_cell_composite",
            params: vec![(vec![1, d], x), (vec![d, d], wi)],
            build: Box::new(move |g, ids| {
                let z = g.matmul(ids[0], ids[1]).unwrap();
                let i = g.sigmoid(z);
                let c = g.tanh(z);
                let h = g.mul(i, c).unwrap();
                weighted_sum(g, h, &w)
            }),
        });
    }

    {
        let (r, d, f) = (
            rng.random_range(1..=3),
            rng.random_range(2..=4),
            rng.random_range(2..=5),
        );
        let x = fill(&mut rng, r * d, -1.0, 1.0);
        let w1 = fill(&mut rng, d * f, -1.0, 1.0);
        let b1 = fill(&mut rng, f, -0.5, 0.5);
        let w2 = fill(&mut rng, f * d, -1.0, 1.0);
        let w = fill(&mut rng, r * d, -1.0, 1.0);
        cases.push(Case {
            name: "ffn_composite",
            params: vec![
                (vec![r, d], x),
                (vec![d, f], w1),
                (vec![f], b1),
                (vec![f, d], w2),
            ],
            build: Box::new(move |g, ids| {
                let h = g.matmul(ids[0], ids[1]).unwrap();
                let hb = g.add_bias(h, ids[2]).unwrap();
                let a = g.gelu(hb);
                let y = g.matmul(a, ids[3]).unwrap();
                let res = g.add(ids[0], y).unwrap();
                let n = g.normalize(res, 1e-5).unwrap();
                weighted_sum(g, n, &w)
            }),
        });
    }

    cases
}

#[test]
fn randomized_graphs_cover_every_primitive_within_tolerance() {
    let mut total = 0usize;
    for seed in [11, 29, 47] {
        for case in all_cases(seed) {
            check(&case);
            total += 1;
        }
    }
    assert!(total >= 50, "only {total} randomized graphs were checked");
}
