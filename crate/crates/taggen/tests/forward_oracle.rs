//! Straight-line dense reimplementation of the generator forward pass,
//! independent of the tape, used as an oracle for the model code.

use taggen::checks::{toy_corpus, toy_generator};
use taggen::corpus::{BOS, PAD};
use taggen::hashgen::Generator;
use taggen::{Real, Tsr};

use numcore::{Bind, ParamStore, Tape};

type Mat = Vec<Vec<Real>>;

fn rows_of(t: &Tsr) -> Mat {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    (0..r).map(|i| (0..c).map(|j| t.at(i, j)).collect()).collect()
}

fn param(store: &ParamStore<Real>, name: &str) -> Mat {
    rows_of(store.get(name).unwrap())
}

fn param_vec(store: &ParamStore<Real>, name: &str) -> Vec<Real> {
    store.get(name).unwrap().data().to_vec()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

fn add_bias(a: &Mat, b: &[Real]) -> Mat {
    a.iter()
        .map(|row| row.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect()
}

fn relu(a: &Mat) -> Mat {
    a.iter()
        .map(|row| row.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect())
        .collect()
}

fn layer_norm(a: &Mat, gain: &[Real], bias: &[Real]) -> Mat {
    let d = a[0].len();
    a.iter()
        .map(|row| {
            let mu: Real = row.iter().sum::<Real>() / d as Real;
            let var: Real = row.iter().map(|x| (x - mu) * (x - mu)).sum::<Real>() / d as Real;
            let inv = 1.0 / (var + 1e-5).sqrt();
            (0..d)
                .map(|j| (row[j] - mu) * inv * gain[j] + bias[j])
                .collect()
        })
        .collect()
}

fn softmax_row_masked(row: &[Real], allowed: &[bool]) -> Vec<Real> {
    let max = row
        .iter()
        .zip(allowed)
        .filter(|(_, &a)| a)
        .map(|(&x, _)| x)
        .fold(Real::NEG_INFINITY, Real::max);
    let exps: Vec<Real> = row
        .iter()
        .zip(allowed)
        .map(|(&x, &a)| if a { (x - max).exp() } else { 0.0 })
        .collect();
    let sum: Real = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Multi-head attention with per-row key masks.
fn attention(
    store: &ParamStore<Real>,
    prefix: &str,
    q_in: &Mat,
    kv_in: &Mat,
    mask: &dyn Fn(usize, usize) -> bool,
    heads: usize,
) -> Mat {
    let d = q_in[0].len();
    let dh = d / heads;
    let scale = 1.0 / (dh as Real).sqrt();
    let mut joined = vec![Vec::with_capacity(d); q_in.len()];
    for h in 0..heads {
        let q = matmul(q_in, &param(store, &format!("{prefix}.q{h}")));
        let k = matmul(kv_in, &param(store, &format!("{prefix}.k{h}")));
        let v = matmul(kv_in, &param(store, &format!("{prefix}.v{h}")));
        for i in 0..q.len() {
            let scores: Vec<Real> = (0..k.len())
                .map(|j| {
                    scale
                        * q[i]
                            .iter()
                            .zip(&k[j])
                            .map(|(a, b)| a * b)
                            .sum::<Real>()
                })
                .collect();
            let allowed: Vec<bool> = (0..k.len()).map(|j| mask(i, j)).collect();
            let probs = softmax_row_masked(&scores, &allowed);
            for c in 0..dh {
                let z: Real = (0..k.len()).map(|j| probs[j] * v[j][c]).sum();
                joined[i].push(z);
            }
        }
    }
    let o = matmul(&joined, &param(store, &format!("{prefix}.o.w")));
    add_bias(&o, &param_vec(store, &format!("{prefix}.o.b")))
}

fn encoder_forward(gen: &Generator, ids: &[usize], n_real: usize) -> Mat {
    let store = &gen.store;
    let d = gen.cfg.d;
    let tok = param(store, "hashgen.tok_embed");
    let pos = param(store, "hashgen.enc_pos");
    let mut x: Mat = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (0..d).map(|j| tok[id][j] + pos[i][j]).collect())
        .collect();
    for l in 0..gen.cfg.enc_layers {
        let base = format!("hashgen.enc.l{l}");
        let n1 = layer_norm(
            &x,
            &param_vec(store, &format!("{base}.ln1.gain")),
            &param_vec(store, &format!("{base}.ln1.bias")),
        );
        let attn = attention(
            store,
            &format!("{base}.attn"),
            &n1,
            &n1,
            &|_, j| j < n_real,
            gen.cfg.heads,
        );
        x = add(&x, &attn);
        let n2 = layer_norm(
            &x,
            &param_vec(store, &format!("{base}.ln2.gain")),
            &param_vec(store, &format!("{base}.ln2.bias")),
        );
        let h1 = relu(&add_bias(
            &matmul(&n2, &param(store, &format!("{base}.ff.w1.w"))),
            &param_vec(store, &format!("{base}.ff.w1.b")),
        ));
        let h2 = add_bias(
            &matmul(&h1, &param(store, &format!("{base}.ff.w2.w"))),
            &param_vec(store, &format!("{base}.ff.w2.b")),
        );
        x = add(&x, &h2);
    }
    layer_norm(
        &x,
        &param_vec(store, "hashgen.enc.ln_out.gain"),
        &param_vec(store, "hashgen.enc.ln_out.bias"),
    )
}

fn decoder_forward(gen: &Generator, prefix: &[usize], fused: &Mat, n_real: usize) -> Mat {
    let store = &gen.store;
    let d = gen.cfg.d;
    let tok = param(store, "hashgen.tok_embed");
    let pos = param(store, "hashgen.dec_pos");
    let mut y: Mat = prefix
        .iter()
        .enumerate()
        .map(|(i, &id)| (0..d).map(|j| tok[id][j] + pos[i][j]).collect())
        .collect();
    for l in 0..gen.cfg.dec_layers {
        let base = format!("hashgen.dec.l{l}");
        let n1 = layer_norm(
            &y,
            &param_vec(store, &format!("{base}.ln1.gain")),
            &param_vec(store, &format!("{base}.ln1.bias")),
        );
        let self_attn = attention(
            store,
            &format!("{base}.self_attn"),
            &n1,
            &n1,
            &|i, j| j <= i,
            gen.cfg.heads,
        );
        y = add(&y, &self_attn);
        let n2 = layer_norm(
            &y,
            &param_vec(store, &format!("{base}.ln2.gain")),
            &param_vec(store, &format!("{base}.ln2.bias")),
        );
        let cross = attention(
            store,
            &format!("{base}.cross_attn"),
            &n2,
            fused,
            &|_, j| j < n_real,
            gen.cfg.heads,
        );
        y = add(&y, &cross);
        let n3 = layer_norm(
            &y,
            &param_vec(store, &format!("{base}.ln3.gain")),
            &param_vec(store, &format!("{base}.ln3.bias")),
        );
        let h1 = relu(&add_bias(
            &matmul(&n3, &param(store, &format!("{base}.ff.w1.w"))),
            &param_vec(store, &format!("{base}.ff.w1.b")),
        ));
        let h2 = add_bias(
            &matmul(&h1, &param(store, &format!("{base}.ff.w2.w"))),
            &param_vec(store, &format!("{base}.ff.w2.b")),
        );
        y = add(&y, &h2);
    }
    layer_norm(
        &y,
        &param_vec(store, "hashgen.dec.ln_out.gain"),
        &param_vec(store, "hashgen.dec.ln_out.bias"),
    )
}

fn head_distribution(gen: &Generator, states: &Mat, fused: &Mat, n_real: usize) -> Mat {
    let store = &gen.store;
    let mut combined = Vec::new();
    for s in states {
        let scores: Vec<Real> = fused
            .iter()
            .map(|h| s.iter().zip(h).map(|(a, b)| a * b).sum())
            .collect();
        let allowed: Vec<bool> = (0..fused.len()).map(|j| j < n_real).collect();
        let a = softmax_row_masked(&scores, &allowed);
        let context: Vec<Real> = (0..fused[0].len())
            .map(|c| (0..fused.len()).map(|j| a[j] * fused[j][c]).sum())
            .collect();
        let mut row = s.clone();
        row.extend(context);
        combined.push(row);
    }
    let z = matmul(
        &matmul(&combined, &param(store, "hashgen.combine")),
        &param(store, "hashgen.out"),
    );
    z.iter()
        .map(|row| {
            let allowed = vec![true; row.len()];
            softmax_row_masked(row, &allowed)
        })
        .collect()
}

fn input_ids(gen: &Generator, tokens: &[String]) -> (Vec<usize>, usize) {
    let mut ids: Vec<usize> = tokens
        .iter()
        .take(gen.cfg.input_len)
        .map(|t| gen.vocab.id(t))
        .collect();
    let n_real = ids.len().max(1);
    while ids.len() < gen.cfg.input_len {
        ids.push(PAD);
    }
    (ids, n_real)
}

fn max_abs_diff(a: &Mat, got: &Tsr) -> Real {
    let mut worst: Real = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            worst = worst.max((x - got.at(i, j)).abs());
        }
    }
    worst
}

/// Three-token input through the one-layer encoder matches the dense oracle.
#[test]
fn encoder_matches_dense_oracle() {
    let mut gen = toy_generator(11).unwrap();
    gen.cfg.use_tam = false;
    gen.cfg.use_eam = false;
    let tweet = &toy_corpus()[3];
    assert_eq!(tweet.tokens.len(), 3);

    let tape: Tape<Real> = Tape::new();
    let ctx = Bind::new(&tape, &gen.store);
    let (fused, _) = gen.encode_fused(&ctx, tweet).unwrap();
    let got = fused.value();

    let (ids, n_real) = input_ids(&gen, &tweet.tokens);
    let expect = encoder_forward(&gen, &ids, n_real);
    let diff = max_abs_diff(&expect, &got);
    assert!(diff < 1e-10, "encoder deviates from the dense oracle by {diff}");
}

/// Two decoding steps match the dense oracle's distributions.
#[test]
fn decode_steps_match_dense_oracle() {
    let mut gen = toy_generator(17).unwrap();
    gen.cfg.use_tam = false;
    gen.cfg.use_eam = false;
    let tweet = &toy_corpus()[0];

    let tape: Tape<Real> = Tape::new();
    let ctx = Bind::new(&tape, &gen.store);
    let (fused, cols) = gen.encode_fused(&ctx, tweet).unwrap();
    let n_real = cols.iter().filter(|&&c| c).count();

    let fused_mat = rows_of(&fused.value());
    let some_word = taggen::corpus::NUM_SPECIALS; // first non-special vocab id
    for prefix in [vec![BOS], vec![BOS, some_word]] {
        let (_, _, dist) = gen.decode_step(&ctx, &prefix, fused, &cols).unwrap();
        let got = dist.value();
        let states = decoder_forward(&gen, &prefix, &fused_mat, n_real);
        let expect = head_distribution(&gen, &states, &fused_mat, n_real);
        let diff = max_abs_diff(&expect, &got);
        assert!(
            diff < 1e-10,
            "decode step for prefix {prefix:?} deviates by {diff}"
        );
    }
}

/// Fused states equal encoder states + memory vector + summed node
/// encodings, recomputed by direct summation.
#[test]
fn fusion_equals_direct_summation() {
    let gen = toy_generator(23).unwrap();
    let tweet = &toy_corpus()[1]; // mentions "Paris Metro"
    assert!(gen.cfg.use_tam && gen.cfg.use_eam);

    // Full fused states.
    let tape: Tape<Real> = Tape::new();
    let ctx = Bind::new(&tape, &gen.store);
    let (fused, _) = gen.encode_fused(&ctx, tweet).unwrap();
    let full = fused.value();

    // Plain encoder states h.
    let mut bare = toy_generator(23).unwrap();
    bare.cfg.use_tam = false;
    bare.cfg.use_eam = false;
    let tape2: Tape<Real> = Tape::new();
    let ctx2 = Bind::new(&tape2, &bare.store);
    let (h_only, _) = bare.encode_fused(&ctx2, tweet).unwrap();
    let h = h_only.value();

    // Memory vector o by direct computation.
    let (ids, n_real) = input_ids(&gen, &tweet.tokens);
    let tok = param(&gen.store, "hashgen.tok_embed");
    let d = gen.cfg.d;
    let real_ids: Vec<usize> = ids[..n_real].iter().copied().filter(|&i| i != PAD).collect();
    let e: Vec<Real> = (0..d)
        .map(|j| real_ids.iter().map(|&id| tok[id][j]).sum::<Real>() / real_ids.len() as Real)
        .collect();
    let keys = param(&gen.store, "tam.keys");
    let values = param(&gen.store, "tam.values");
    let logits: Vec<Real> = keys
        .iter()
        .map(|u| u.iter().zip(&e).map(|(a, b)| a * b).sum())
        .collect();
    let p = softmax_row_masked(&logits, &vec![true; logits.len()]);
    let o: Vec<Real> = (0..d)
        .map(|j| (0..keys.len()).map(|k| p[k] * values[k][j]).sum())
        .collect();

    // Node encodings from the graph encoder, summed per token.
    let tape3: Tape<Real> = Tape::new();
    let ctx3 = Bind::new(&tape3, &gen.store);
    let nodes = taggen::eam::encode_graph(&ctx3, &gen.graph, gen.cfg.gcn_layers, gen.cfg.gat_layers)
        .unwrap()
        .expect("toy graph is nonempty")
        .value();
    let map = taggen::eam::token_entity_map(&tweet.processed, &gen.graph, &gen.gazetteer);

    let mut any_entity = false;
    for i in 0..gen.cfg.input_len {
        for j in 0..d {
            let mut want = h.at(i, j) + o[j];
            if i < map.len() {
                for &node in &map[i] {
                    want += nodes.at(node, j);
                    any_entity = true;
                }
            }
            let gotv = full.at(i, j);
            assert!(
                (want - gotv).abs() < 1e-10,
                "fused[{i}][{j}]: want {want}, got {gotv}"
            );
        }
    }
    assert!(any_entity, "test tweet should map at least one entity");
}

/// No memory, no entities: fused states equal the bare encoder states; a
/// single entity changes exactly its token positions.
#[test]
fn fusion_identity_and_locality() {
    let mut gen = toy_generator(5).unwrap();
    gen.cfg.use_tam = false;
    gen.cfg.use_eam = false;
    let tweet = &toy_corpus()[2]; // no entities recognized ("i love coffee mornings")
    let tape: Tape<Real> = Tape::new();
    let ctx = Bind::new(&tape, &gen.store);
    let (fused, _) = gen.encode_fused(&ctx, tweet).unwrap();

    let tape2: Tape<Real> = Tape::new();
    let ctx2 = Bind::new(&tape2, &gen.store);
    let (again, _) = gen.encode_fused(&ctx2, tweet).unwrap();
    assert_eq!(fused.value(), again.value());

    // Entity contribution touches exactly the mapped token positions.
    let gen_full = toy_generator(5).unwrap();
    let mut gen_no_ent = toy_generator(5).unwrap();
    gen_no_ent.cfg.use_eam = false;
    let tweet = &toy_corpus()[0]; // "visiting Paris today": entity on token 1
    let map = taggen::eam::token_entity_map(&tweet.processed, &gen_full.graph, &gen_full.gazetteer);
    let tape3: Tape<Real> = Tape::new();
    let ctx3 = Bind::new(&tape3, &gen_full.store);
    let with_ent = gen_full.encode_fused(&ctx3, tweet).unwrap().0.value();
    let tape4: Tape<Real> = Tape::new();
    let ctx4 = Bind::new(&tape4, &gen_no_ent.store);
    let without_ent = gen_no_ent.encode_fused(&ctx4, tweet).unwrap().0.value();
    for i in 0..gen_full.cfg.input_len {
        let differs = (0..gen_full.cfg.d)
            .any(|j| (with_ent.at(i, j) - without_ent.at(i, j)).abs() > 1e-12);
        let has_entity = i < map.len() && !map[i].is_empty();
        assert_eq!(differs, has_entity, "position {i}");
    }
}

/// Attention normalization across encoder self-attention, decoder cross
/// attention, the output attention, and the vocabulary distribution.
#[test]
fn every_distribution_normalizes() {
    let gen = toy_generator(29).unwrap();
    for tweet in &toy_corpus() {
        let tape: Tape<Real> = Tape::new();
        let ctx = Bind::new(&tape, &gen.store);
        let (fused, cols) = gen.encode_fused(&ctx, tweet).unwrap();
        let (attn, _, dist) = gen.decode_step(&ctx, &[BOS], fused, &cols).unwrap();
        let a = attn.value();
        let sum_a: Real = a.row(0).iter().sum();
        assert!((sum_a - 1.0).abs() < 1e-9);
        let dv = dist.value();
        let sum_d: Real = dv.row(0).iter().sum();
        assert!((sum_d - 1.0).abs() < 1e-9);
        assert!(dv.data().iter().all(|&p| p > 0.0));
    }
}

/// Zero-initialized weights make all hidden states equal across positions.
#[test]
fn zero_weights_collapse_positions() {
    let gen = toy_generator(3).unwrap();
    let mut store: ParamStore<Real> = ParamStore::new();
    for name in gen.store.names().map(str::to_string).collect::<Vec<_>>() {
        let t = gen.store.get(&name).unwrap();
        store.insert(name, Tsr::zeros(t.shape())).unwrap();
    }
    let mut zero_gen = toy_generator(3).unwrap();
    zero_gen.store = store;
    zero_gen.cfg.use_tam = false;
    zero_gen.cfg.use_eam = false;
    let tweet = &toy_corpus()[0];
    let tape: Tape<Real> = Tape::new();
    let ctx = Bind::new(&tape, &zero_gen.store);
    let (fused, _) = zero_gen.encode_fused(&ctx, tweet).unwrap();
    let h = fused.value();
    for i in 1..zero_gen.cfg.input_len {
        for j in 0..zero_gen.cfg.d {
            assert_eq!(h.at(i, j), h.at(0, j));
        }
    }
}
