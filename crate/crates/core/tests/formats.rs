use proptest::prelude::*;
use vspair::data::{corrupt, toy_digits};
use vspair::io::{
    decode_checkpoint, decode_pgm, encode_checkpoint, encode_idx_f64, encode_idx_u8, encode_pgm, load_checkpoint,
    parse_idx, parse_run_config, parse_theory_config, read_csv, read_dataset, save_checkpoint, serialize_run_config,
    write_csv, write_dataset,
};
use vspair::models::{ModelConfig, PairedModel, Variant};
use vspair::rng::Rng;
use vspair::tensor::Tensor;
use vspair::training::TrainConfig;
use vspair::Error;

fn scrambled(variant: Variant, seed: u64) -> PairedModel {
    let mut c = ModelConfig::new(variant, 9, 7, 4, 3);
    c.hidden = vec![5, 6];
    c.map_hidden = vec![3];
    c.seed = seed;
    c.alpha0 = 1.5;
    c.beta0 = 0.1 + 0.2;
    let mut m = PairedModel::new(c).unwrap();
    let mut rng = Rng::new(seed ^ 77);
    for t in m.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v = rng.gaussian() * 1e3_f64.powf(rng.uniform() - 0.5);
        }
    }
    m
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    for (k, variant) in Variant::ALL.into_iter().enumerate() {
        let m = scrambled(variant, k as u64);
        let bytes = encode_checkpoint(&m).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.config(), m.config());
        for ((na, ta), (nb, tb)) in m.params().iter().zip(back.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.shape(), tb.shape());
            assert!(ta.data().iter().zip(tb.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = scrambled(Variant::VsPair, 3);
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &m).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), m);
    assert!(matches!(load_checkpoint(dir.path().join("none")), Err(Error::Io { .. })));
}

#[test]
fn checkpoint_rejects_bad_headers_and_tampering() {
    let bytes = encode_checkpoint(&scrambled(Variant::VPair, 1)).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));
    let mut bad = bytes.clone();
    bad[4] = 2;
    assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 4, .. })));
    let at = bytes.windows(5).position(|w| w == b"seed=").unwrap();
    let mut bad = bytes.clone();
    bad[at + 5] = if bad[at + 5] == b'9' { b'8' } else { b'9' };
    assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { .. })));
    assert!(decode_checkpoint(&bytes[..bytes.len() / 2]).is_err());
}

#[test]
fn idx_dimensions_are_big_endian() {
    let mut b = vec![0, 0, 8, 2, 0, 0, 1, 2, 0, 0, 0, 1];
    b.extend(std::iter::repeat_n(255u8, 258));
    let t = parse_idx(&b).unwrap();
    assert_eq!(t.shape(), &[258, 1]);
    assert!(t.data().iter().all(|v| *v == 1.0));

    let t = Tensor::new(vec![2, 3], vec![0.0, 0.5, 1.0, 0.25, 2.0, -1.0]).unwrap();
    let u8s = encode_idx_u8(&t).unwrap();
    assert_eq!(&u8s[..12], &[0, 0, 8, 2, 0, 0, 0, 2, 0, 0, 0, 3]);
    assert_eq!(&u8s[12..], &[0, 128, 255, 64, 255, 0]);
    let f = encode_idx_f64(&t).unwrap();
    assert_eq!(&f[12..20], &0.0f64.to_be_bytes());
    assert_eq!(&f[20..28], &0.5f64.to_be_bytes());
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = toy_digits(12, &mut Rng::new(4)).unwrap();
    write_dataset(dir.path(), &d).unwrap();
    assert_eq!(read_dataset(dir.path()).unwrap(), d);
}

#[test]
fn corruption_matches_duplicate_sampler() {
    let img = Rng::new(8).uniform_tensor(&[28, 28]);
    for seed in 0..50 {
        let mut rng = Rng::new(seed);
        let mut twin = rng.clone();
        let (out, mask) = corrupt(&img, &mut rng).unwrap();
        let mut expect = vec![0.0; 784];
        for _ in 0..10 {
            let r0 = twin.below(24);
            let c0 = twin.below(24);
            for r in r0..r0 + 5 {
                for c in c0..c0 + 5 {
                    expect[r * 28 + c] = 1.0;
                }
            }
        }
        assert_eq!(mask.data(), &expect[..]);
        let lo = img.min();
        for (i, e) in expect.iter().enumerate() {
            if *e == 1.0 {
                assert_eq!(out.data()[i], lo);
            } else {
                assert_eq!(out.data()[i].to_bits(), img.data()[i].to_bits());
            }
        }
    }
}

#[test]
fn corruption_of_constant_image_is_identity() {
    let img = Tensor::full(&[10, 10], 0.3);
    let (out, mask) = corrupt(&img, &mut Rng::new(1)).unwrap();
    assert_eq!(out, img);
    assert!(mask.sum() >= 25.0);
    assert!(corrupt(&Tensor::zeros(&[4, 9]), &mut Rng::new(1)).is_err());
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_csv(&path, &["a", "b"], [vec!["1", "x,y"], vec!["2", "\"q\""]]).unwrap();
    let (h, rows) = read_csv(&path).unwrap();
    assert_eq!(h, ["a", "b"]);
    assert_eq!(rows[0][1], "x,y");
    assert_eq!(rows[1][1], "\"q\"");
    assert!(matches!(
        write_csv(dir.path().join("no/such/dir.csv"), &["a"], [["1"]]),
        Err(Error::Io { .. })
    ));
}

#[test]
fn theory_config_errors_carry_line_numbers() {
    assert!(matches!(parse_theory_config("\n\nfoo = 1\n"), Err(Error::Config { line: 3, .. })));
    assert!(matches!(parse_theory_config("b = x\n"), Err(Error::Config { line: 1, .. })));
    assert!(matches!(parse_theory_config("noise_cov = -1\n"), Err(Error::NotPositiveDefinite(_))));
}

fn arb_config() -> impl Strategy<Value = TrainConfig> {
    (
        prop::sample::select(Variant::ALL.to_vec()),
        prop::array::uniform7(0.0f64..10.0),
        (0.01f64..200.0, 0.01f64..200.0, 0.1f64..100.0, 1e-6f64..1.0),
        (1usize..500, 1usize..512, any::<u64>(), 1usize..1000, 1usize..1000),
        prop::collection::vec(1usize..1024, 0..4),
        prop::collection::vec(1usize..1024, 0..4),
    )
        .prop_map(|(variant, l, (a, b, t, lr), (ep, bs, seed, lx, ly), hidden, map_hidden)| {
            let mut c = TrainConfig::for_variant(variant);
            c.weights.lambda1 = l[0];
            c.weights.lambda2 = l[1];
            c.weights.lambda3 = l[2];
            c.weights.lambda_rho = l[3];
            c.weights.lambda_b = l[4];
            c.weights.gamma_x = l[5];
            c.weights.gamma_y = l[6];
            c.alpha0 = a;
            c.beta0 = b;
            c.gate_temperature = t;
            c.lr = lr;
            c.epochs = ep;
            c.batch_size = bs;
            c.seed = seed;
            c.latent_x = lx;
            c.latent_y = ly;
            c.hidden = hidden;
            c.map_hidden = map_hidden;
            c
        })
}

proptest! {
    #[test]
    fn run_config_parse_serialize_fixed_point(c in arb_config()) {
        let text = serialize_run_config(&c);
        let once = parse_run_config(&text).unwrap();
        prop_assert_eq!(&once, &c);
        prop_assert_eq!(parse_run_config(&serialize_run_config(&once)).unwrap(), once);
    }

    #[test]
    fn idx_f64_round_trip(shape in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
        let t = Rng::new(seed).gaussian_tensor(&shape);
        prop_assert_eq!(parse_idx(&encode_idx_f64(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn pgm_round_trip_within_quantization(h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
        let img = Rng::new(seed).uniform_tensor(&[h, w]);
        let back = decode_pgm(&encode_pgm(&img).unwrap()).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn corruption_popcount_bounds(seed in any::<u64>()) {
        let img = Rng::new(seed ^ 1).uniform_tensor(&[28, 28]);
        let (_, mask) = corrupt(&img, &mut Rng::new(seed)).unwrap();
        let n = mask.sum();
        prop_assert!((25.0..=250.0).contains(&n));
    }
}
