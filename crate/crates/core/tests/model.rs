use nesr_core::model::*;
use nesr_core::synth::uniform_grid;
use nesr_core::NesrError;
use nesr_tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(spi: bool, nam: bool) -> ModelConfig {
    ModelConfig {
        encoder_channels: 4,
        embed_channels: 4,
        enable_spi: spi,
        enable_nam: nam,
        ..ModelConfig::default()
    }
}

fn rgb(seed: u64, h: usize, w: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[3, h, w], |_| rng.random_range(0.0..1.0))
}

fn zeroed(w: &ModelWeights<Tensor>) -> ModelWeights<Tensor> {
    w.map(|_, t| Tensor::zeros(t.shape()))
}

#[test]
fn output_shape_follows_the_wavelength_list() {
    let cfg = ModelConfig::default();
    let w = ModelWeights::init(&cfg, 1).unwrap();
    let x = rgb(2, 16, 16);
    let y31 = forward(&x, &uniform_grid(31), &cfg, &w).unwrap();
    assert_eq!(y31.volume().shape(), &[31, 16, 16]);
    let y61 = forward(&x, &uniform_grid(61), &cfg, &w).unwrap();
    assert_eq!(y61.volume().shape(), &[61, 16, 16]);
    assert!(y61.volume().all_finite());
}

#[test]
fn every_band_count_up_to_61() {
    let cfg = small(true, true);
    let w = ModelWeights::init(&cfg, 3).unwrap();
    let x = rgb(4, 8, 8);
    for bands in 1..=61 {
        let y = forward(&x, &uniform_grid(bands), &cfg, &w).unwrap();
        assert_eq!(y.volume().shape(), &[bands, 8, 8]);
        assert!(y.volume().all_finite(), "{bands} bands");
    }
}

#[test]
fn zero_weights_give_zero_output() {
    let cfg = small(true, true);
    let w = zeroed(&ModelWeights::init(&cfg, 1).unwrap());
    let y = forward(&rgb(5, 8, 8), &uniform_grid(7), &cfg, &w).unwrap();
    assert!(y.volume().data().iter().all(|&v| v == 0.0));
}

#[test]
fn decoder_with_only_a_last_bias_is_constant() {
    let cfg = ModelConfig::default();
    let mut head = zeroed(&ModelWeights::init(&cfg, 1).unwrap()).head;
    let beta = 0.375;
    head.layers.last_mut().unwrap().bias = Tensor::full(&[1], beta);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let v = Tensor::from_fn(&[7936, 32], |_| rng.random_range(-1.0..1.0));
    let out = decode(&v, &head, 1000).unwrap();
    assert_eq!(out.shape(), &[7936, 1]);
    assert!(out.data().iter().all(|&y| y == beta));
}

#[test]
fn chunked_decode_matches_a_single_chunk() {
    let cfg = small(true, true);
    let w = ModelWeights::init(&cfg, 8).unwrap();
    let v = rgb(9, 50, 4).reshape(&[150, 4]).unwrap();
    let whole = decode(&v, &w.head, 150).unwrap();
    let pieces = decode(&v, &w.head, 7).unwrap();
    assert!(whole.max_abs_diff(&pieces).unwrap() < 1e-12);
}

#[test]
fn nam_token_shape() {
    let cfg = ModelConfig::default();
    let w = ModelWeights::init(&cfg, 2).unwrap();
    let tape = Tape::new();
    let wv = w.map(|_, t| tape.constant(t.clone()));
    let x = tape.constant(rgb(3, 16, 16));
    let grid = normalize_wavelengths(&uniform_grid(31), 16, 16).unwrap();
    let m_in = encode(&x, &wv.encoder, &cfg).unwrap();
    let m_out = spi_forward(&m_in, 31, &wv.spi, &cfg).unwrap();
    assert_eq!(m_out.shape(), &[32, 31, 16, 16]);
    let v = nam_forward(&m_out, &grid, &wv.nam, &cfg, None).unwrap();
    assert_eq!(v.shape(), &[7936, 32]);
}

fn uniform_attention(w: &mut ModelWeights<Tensor>) {
    let a = w.nam.attention.as_mut().unwrap();
    a.query = Tensor::zeros(a.query.shape());
    a.key = Tensor::zeros(a.key.shape());
}

#[test]
fn zero_query_and_key_average_the_values() {
    let cfg = small(true, true);
    let c = cfg.embed_channels;
    let mut w = ModelWeights::init(&cfg, 4).unwrap();
    uniform_attention(&mut w);
    let a = w.nam.attention.as_mut().unwrap();
    a.output.weight = Tensor::from_fn(&[c, c], |i| if i / c == i % c { 1.0 } else { 0.0 });
    a.output.bias = Tensor::zeros(&[c]);

    let tape = Tape::new();
    let wv = w.map(|_, t| tape.constant(t.clone()));
    let grid = normalize_wavelengths(&uniform_grid(5), 8, 8).unwrap();
    let m_in = encode(&tape.constant(rgb(1, 8, 8)), &wv.encoder, &cfg).unwrap();
    let m_out = spi_forward(&m_in, 5, &wv.spi, &cfg).unwrap();
    let v = embed_tokens(&m_out, &grid, &wv.nam.token, &cfg).unwrap().to_tensor();
    let out = nam_forward(&m_out, &grid, &wv.nam, &cfg, None).unwrap().to_tensor();

    let wv_val = &w.nam.attention.as_ref().unwrap().value;
    let slope = cfg.leaky_slope;
    for n in 0..v.shape()[0] {
        let mut mean = 0.0;
        for j in 0..c {
            for i in 0..c {
                mean += v.at(&[n, i]) * wv_val.at(&[i, j]);
            }
        }
        mean /= c as f64;
        let expected = if mean >= 0.0 { mean } else { slope * mean };
        for j in 0..c {
            assert!((out.at(&[n, j]) - expected).abs() < 1e-9);
        }
    }
}

#[test]
fn attention_maps_are_row_stochastic_for_every_variant() {
    for variant in [AttentionVariant::SpatialSpectral, AttentionVariant::Spectral, AttentionVariant::Spatial] {
        let cfg = ModelConfig {
            attention_variant: variant,
            ..small(true, true)
        };
        let w = ModelWeights::init(&cfg, 6).unwrap();
        let grid = normalize_wavelengths(&uniform_grid(5), 8, 8).unwrap();
        let v = latent_codes(&rgb(7, 8, 8), &grid, &ModelConfig { enable_nam: false, ..cfg.clone() }, &{
            let mut plain = w.clone();
            plain.nam.attention = None;
            plain
        })
        .unwrap();
        let maps = attention_maps(&v, w.nam.attention.as_ref().unwrap(), &grid, &cfg).unwrap();
        let m = maps.shape()[2];
        let expected = match variant {
            AttentionVariant::SpatialSpectral => [1, 4, 4],
            AttentionVariant::Spectral => [64, 5, 5],
            AttentionVariant::Spatial => [5, 64, 64],
        };
        assert_eq!(maps.shape(), &expected);
        for row in maps.data().chunks(m) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn single_token_attention_is_four_by_four() {
    let cfg = small(true, true);
    let w = ModelWeights::init(&cfg, 2).unwrap();
    let grid = normalize_wavelengths(&[550.0], 1, 1).unwrap();
    let v = Tensor::new(&[1, 4], vec![0.3, -0.7, 1.1, 0.2]).unwrap();
    let maps = attention_maps(&v, w.nam.attention.as_ref().unwrap(), &grid, &cfg).unwrap();
    assert_eq!(maps.shape(), &[1, 4, 4]);
    for row in maps.data().chunks(4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn slices_are_independent_without_attention() {
    let cfg = small(true, false);
    let w = ModelWeights::init(&cfg, 9).unwrap();
    let x = rgb(10, 8, 8);
    let a = forward(&x, &[420.0, 480.0, 530.0, 610.0, 690.0], &cfg, &w).unwrap();
    let b = forward(&x, &[420.0, 480.0, 560.0, 610.0, 690.0], &cfg, &w).unwrap();
    for i in [0, 1, 3, 4] {
        assert_eq!(a.band(i), b.band(i));
    }
    assert_ne!(a.band(2), b.band(2));
}

#[test]
fn shared_wavelengths_share_slices_without_spi_or_attention() {
    let cfg = small(false, false);
    let w = ModelWeights::init(&cfg, 9).unwrap();
    let x = rgb(10, 8, 8);
    let a = forward(&x, &[420.0, 480.0, 530.0, 610.0, 690.0], &cfg, &w).unwrap();
    let b = forward(&x, &[480.0, 610.0], &cfg, &w).unwrap();
    assert_eq!(a.band(1), b.band(0));
    assert_eq!(a.band(3), b.band(1));
    assert_ne!(a.band(1), a.band(3));
}

#[test]
fn changing_a_wavelength_changes_its_slice() {
    let cfg = small(true, true);
    let w = ModelWeights::init(&cfg, 11).unwrap();
    let x = rgb(12, 8, 8);
    let a = forward(&x, &[450.0, 550.0, 650.0], &cfg, &w).unwrap();
    let b = forward(&x, &[450.0, 560.0, 650.0], &cfg, &w).unwrap();
    assert_ne!(a.band(1), b.band(1));
}

#[test]
fn spi_branches_are_per_voxel_interpolation() {
    let tape = Tape::new();
    let f = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let m = Tensor::from_fn(&[f, 4, 5], |_| rng.random_range(-1.0..1.0));
    let (vert, horiz) = spi_branches(&tape.constant(m.clone()), 11).unwrap();
    let (vert, horiz) = (vert.to_tensor(), horiz.to_tensor());
    assert_eq!(vert.shape(), &[11, 4, 5]);
    for b in 0..11 {
        let pos = b as f64 * (f - 1) as f64 / 10.0;
        let lo = (pos.floor() as usize).min(f - 2);
        let t = pos - lo as f64;
        for y in 0..4 {
            for x in 0..5 {
                let expected = (1.0 - t) * m.at(&[lo, y, x]) + t * m.at(&[lo + 1, y, x]);
                assert!((vert.at(&[b, y, x]) - expected).abs() < 1e-9);
            }
        }
    }
    assert_eq!(vert, horiz);
}

#[test]
fn configuration_errors() {
    let cfg = small(true, true);
    let w = ModelWeights::init(&cfg, 1).unwrap();
    let mut no_attention = w.clone();
    no_attention.nam.attention = None;
    let x = rgb(1, 8, 8);
    assert!(matches!(forward(&x, &uniform_grid(3), &cfg, &no_attention), Err(NesrError::Config(_))));
    let four = Tensor::zeros(&[4, 8, 8]);
    assert!(matches!(forward(&four, &uniform_grid(3), &cfg, &w), Err(NesrError::Config(_))));
    assert!(forward(&x, &[390.0], &cfg, &w).is_err());
    assert!(forward(&rgb(1, 4, 8), &uniform_grid(3), &cfg, &w).is_err());
    let bad = ModelConfig {
        embed_channels: 0,
        ..cfg
    };
    assert!(matches!(ModelWeights::init(&bad, 0), Err(NesrError::Config(_))));
}

#[test]
fn mrae_loss_values() {
    let y = Tensor::new(&[2], vec![0.2, 0.4]).unwrap();
    let gt = Tensor::new(&[2], vec![0.1, 0.5]).unwrap();
    let expected = (0.1 / 0.101 + 0.1 / 0.501) / 2.0;
    assert!((mrae_loss(&y, &gt, 1e-3).unwrap() - expected).abs() < 1e-12);
    assert_eq!(mrae_loss(&gt, &gt, 1e-3).unwrap(), 0.0);
    let eps = 1e-3;
    let zero = Tensor::zeros(&[3]);
    assert!((mrae_loss(&Tensor::full(&[3], eps), &zero, eps).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(mrae_loss(&y, &zero, eps), Err(NesrError::Dimension(_))));
}
