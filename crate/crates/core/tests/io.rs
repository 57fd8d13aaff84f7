use std::path::PathBuf;

use nst_core::io::{
    decode_png, decode_ppm, encode_ppm, load_image, save_image, AnyTensor, Checkpoint, RunConfig, TrainedState,
};
use nst_core::networks::StyleModel;
use nst_core::params::ParamSet;
use nst_core::training::{AdamConfig, AdamState};
use nst_core::{Error, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference.nstc")
}

/// CRC stored in the last four bytes of the reference fixture.
const FIXTURE_CRC: u32 = 0xCE98_8521;

/// The run the fixture was produced from: a freshly initialised small model
/// with one Adam moment pair, plus an f32 tensor.
fn reference_state() -> (TrainedState<f64>, Tensor<f32>) {
    let mut config = RunConfig::default();
    config.transfer_channels = [2, 3, 4];
    config.residual_blocks = 1;
    config.backbone_channels = vec![3];
    config.bottleneck = 2;
    config.meta.insert("model".into(), "joint".into());
    let model = StyleModel::<f64>::init(config.transfer_config(), config.prediction_config(), 7, 0.1).unwrap();
    let mut adam = AdamState::new(&model.params, AdamConfig::default());
    adam.step = 3;
    for (_, t) in adam.first.iter_mut() {
        *t = t.map(|_| 0.25);
    }
    let extra = Tensor::<f32>::uniform(&[2, 3], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
    (
        TrainedState {
            params: model.params,
            adam: Some(adam),
            config,
        },
        extra,
    )
}

fn reference_checkpoint() -> Checkpoint {
    let (state, extra) = reference_state();
    let mut ck = state.to_checkpoint();
    ck.tensors.push(("extra.f32".into(), AnyTensor::F32(extra)));
    ck
}

#[test]
fn reference_fixture_decodes_to_known_table() {
    let path = fixture_path();
    if std::env::var_os("NST_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, reference_checkpoint().encode()).unwrap();
    }
    let bytes = std::fs::read(&path).expect("fixture missing; run with NST_BLESS=1");
    let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if std::env::var_os("NST_BLESS").is_none() {
        assert_eq!(crc, FIXTURE_CRC, "fixture CRC");
    }
    assert_eq!(crc, crc32fast::hash(&bytes[..bytes.len() - 4]));
    let ck = Checkpoint::decode(&bytes).unwrap();
    assert_eq!(ck, reference_checkpoint());
    assert_eq!(ck.encode(), bytes);

    let extra = ck.get("extra.f32").unwrap();
    assert_eq!(extra.shape(), &[2, 3]);
    assert!(matches!(extra, AnyTensor::F32(_)));
    let state = TrainedState::<f64>::from_checkpoint(&ck).unwrap();
    let adam = state.adam.as_ref().unwrap();
    assert_eq!(adam.step, 3);
    assert!(adam.first.iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.25)));
    assert_eq!(state.config.transfer_channels, [2, 3, 4]);
    assert_eq!(state.config.meta["model"], "joint");
    StyleModel::from_parts(
        state.config.transfer_config(),
        state.config.prediction_config(),
        state.params.clone(),
    )
    .unwrap();
}

#[test]
fn checkpoint_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.nstc");
    let ck = reference_checkpoint();
    ck.save(&p).unwrap();
    let back = Checkpoint::load(&p).unwrap();
    assert_eq!(back, ck);
    assert_eq!(std::fs::read(&p).unwrap(), ck.encode());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1, "temp file left behind");
}

#[test]
fn every_single_bit_flip_is_detected() {
    let bytes = reference_checkpoint().encode();
    for i in 0..bytes.len() {
        for bit in [0, 3, 7] {
            let mut b = bytes.clone();
            b[i] ^= 1 << bit;
            assert!(Checkpoint::decode(&b).is_err(), "byte {i} bit {bit}");
        }
    }
}

#[test]
fn truncation_and_versions_are_rejected() {
    let bytes = reference_checkpoint().encode();
    for cut in [0, 3, 4, 11, 20, bytes.len() / 2, bytes.len() - 1] {
        assert!(Checkpoint::decode(&bytes[..cut]).is_err());
    }
    let mut future = bytes.clone();
    future[4..8].copy_from_slice(&99u32.to_le_bytes());
    let n = future.len();
    let crc = crc32fast::hash(&future[..n - 4]);
    future[n - 4..].copy_from_slice(&crc.to_le_bytes());
    assert!(matches!(Checkpoint::decode(&future), Err(Error::Version { .. })));
}

#[test]
fn pure_red_ppm() {
    let t: Tensor<f64> = decode_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
    assert_eq!(t.shape(), &[1, 3, 1, 1]);
    assert_eq!(t.data(), &[1.0, 0.0, 0.0]);
    match decode_ppm::<f64>(b"P5\n1 1\n255\n\x00") {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        decode_ppm::<f64>(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00"),
        Err(Error::UnsupportedFormat(_))
    ));
}

#[test]
fn image_round_trips_within_half_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = Tensor::<f64>::uniform(&[1, 3, 7, 5], 0.0, 1.0, &mut rng);
    for ext in ["ppm", "png"] {
        let p = dir.path().join(format!("x.{ext}"));
        save_image(&img, &p).unwrap();
        let back: Tensor<f64> = load_image(&p).unwrap();
        let worst = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.5 / 255.0 + 1e-12, "{ext}: {worst}");
        save_image(&back, &p).unwrap();
        let again: Tensor<f64> = load_image(&p).unwrap();
        assert_eq!(again, back);
    }
    let bytes = encode_ppm(&img).unwrap();
    assert_eq!(
        decode_ppm::<f64>(&bytes).unwrap(),
        load_image(&dir.path().join("x.ppm")).unwrap()
    );
    assert!(decode_png::<f64>(b"not a png").is_err());
}

#[test]
fn empty_param_set_round_trips() {
    let state = TrainedState::<f32> {
        params: ParamSet::new(),
        adam: None,
        config: RunConfig::default(),
    };
    let back =
        TrainedState::<f32>::from_checkpoint(&Checkpoint::decode(&state.to_checkpoint().encode()).unwrap()).unwrap();
    assert_eq!(back, state);
}
