use landscape::checkpoint::{
    decode_checkpoint, encode_checkpoint, load_network, save_network, Checkpoint, CheckpointError,
};
use landscape::datafile::{decode_dataset, encode_dataset, load_dataset, save_dataset, DatasetFileError};
use landscape::idx::{load_idx_dataset, parse_idx, read_idx, write_idx, IdxError, IdxTensor, LabelMap};
use landscape_core::rng;
use landscape_core::{Network, Task};
use proptest::prelude::*;

fn replace(bytes: &[u8], from: &str, to: &str) -> Vec<u8> {
    let pos = bytes.windows(from.len()).position(|w| w == from.as_bytes()).expect("pattern present");
    let mut out = bytes[..pos].to_vec();
    out.extend_from_slice(to.as_bytes());
    out.extend_from_slice(&bytes[pos + from.len()..]);
    out
}

fn manifest_line<'a>(bytes: &'a [u8], key: &str) -> &'a str {
    let text = std::str::from_utf8(&bytes[..bytes.len().min(4096)]).unwrap_or_else(|e| {
        std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap()
    });
    text.lines().find(|l| l.starts_with(key)).expect("key present")
}

#[test]
fn idx_round_trips_plain_and_gzip() {
    let dir = tempfile::tempdir().unwrap();
    let images = IdxTensor::images(4, 3, 2, (0..24).collect());
    let labels = IdxTensor::labels(vec![0, 3, 8, 9]);
    for gzip in [false, true] {
        let ip = dir.path().join(format!("img{gzip}.idx"));
        let lp = dir.path().join(format!("lab{gzip}.idx"));
        write_idx(&ip, &images, gzip).unwrap();
        write_idx(&lp, &labels, gzip).unwrap();
        assert_eq!(read_idx(&ip).unwrap(), images);
        assert_eq!(read_idx(&lp).unwrap(), labels);
        let d = load_idx_dataset(&ip, &lp, Some(3), LabelMap::Parity).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 6);
        assert_eq!(d.labels, [1, -1, 1]);
        assert_eq!(d.task, Task::Binary);
        assert_eq!(d.inputs[[1, 0]], 6.0 / 255.0);
        let d = load_idx_dataset(&ip, &lp, None, LabelMap::Digits).unwrap();
        assert_eq!(d.labels, [0, 3, 8, 9]);
    }
}

#[test]
fn idx_errors_are_reported() {
    assert!(matches!(parse_idx(&[0, 0, 9, 1, 0, 0, 0, 1, 5]), Err(IdxError::BadMagic(_))));
    assert!(matches!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 4, 5]), Err(IdxError::Truncated { .. })));
    assert!(matches!(
        read_idx(std::path::Path::new("/nonexistent/file.idx")),
        Err(IdxError::Io { .. })
    ));
    let dir = tempfile::tempdir().unwrap();
    let ip = dir.path().join("i.idx");
    let lp = dir.path().join("l.idx");
    write_idx(&ip, &IdxTensor::images(2, 1, 1, vec![0, 1]), false).unwrap();
    write_idx(&lp, &IdxTensor::labels(vec![1, 2, 3]), false).unwrap();
    assert!(matches!(
        load_idx_dataset(&ip, &lp, None, LabelMap::Parity),
        Err(IdxError::Mismatch(_))
    ));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng::rng(3);
    for net in [
        Network::mlp(&[5, 7, 3], false, true, &mut r).unwrap(),
        Network::mlp(&[5, 7, 1], true, false, &mut r).unwrap(),
        Network::committee(9, 3, &mut r).unwrap(),
    ] {
        let path = dir.path().join("net.ckpt");
        save_network(&net, &path).unwrap();
        let back = load_network(&path).unwrap();
        assert_eq!(back, net);
        let bits = |n: &Network| n.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&net));
    }
}

#[test]
fn checkpoint_lineage_and_metadata_survive() {
    let mut ck = Checkpoint::new(Network::perceptron(11, &mut rng::rng(4)).unwrap());
    ck.lineage.seed = Some(7);
    ck.lineage.algorithm = Some("rsgd".into());
    ck.lineage.stages = vec!["train".into()];
    ck.metadata.insert("train_error".into(), "0.01".into());
    assert_eq!(decode_checkpoint(&encode_checkpoint(&ck)).unwrap(), ck);
}

#[test]
fn checkpoint_errors_are_distinct() {
    let net = Network::mlp(&[4, 3, 2], false, true, &mut rng::rng(5)).unwrap();
    let bytes = encode_checkpoint(&Checkpoint::new(net));

    let version = manifest_line(&bytes, "schema_version").to_string();
    let bad = replace(&bytes, &version, "schema_version = 999");
    assert!(matches!(
        decode_checkpoint(&bad),
        Err(CheckpointError::SchemaVersion { found: 999, .. })
    ));

    let floats = manifest_line(&bytes, "payload_floats").to_string();
    let bad = replace(&bytes, &floats, "payload_floats = 3");
    assert!(matches!(decode_checkpoint(&bad), Err(CheckpointError::Architecture { declared: 3, .. })));

    let truncated = &bytes[..bytes.len() - 4];
    assert!(matches!(decode_checkpoint(truncated), Err(CheckpointError::PayloadLength { .. })));

    let mut flipped = bytes.clone();
    let last = flipped.len() - 1;
    flipped[last] ^= 1;
    assert!(matches!(decode_checkpoint(&flipped), Err(CheckpointError::Checksum)));

    assert!(matches!(decode_checkpoint(b"garbage"), Err(CheckpointError::Manifest(_))));
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let h = landscape_core::data::hmm_generate(&landscape_core::data::HmmConfig {
        latent_dim: 5,
        input_dim: 9,
        train_size: 12,
        test_size: 3,
        seed: 1,
    })
    .unwrap();
    let path = dir.path().join("train.ds");
    save_dataset(&h.train, "hmm train", &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), h.train);
    let mut bytes = encode_dataset(&h.test, "hmm test");
    assert_eq!(decode_dataset(&bytes).unwrap(), h.test);
    bytes.pop();
    assert!(matches!(decode_dataset(&bytes), Err(DatasetFileError::PayloadLength { .. })));
}

proptest! {
    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), binary in any::<bool>(), bias in any::<bool>(), h in 1usize..6) {
        let net = Network::mlp(&[3, h, 2], binary, bias && !binary, &mut rng::rng(seed)).unwrap();
        prop_assert_eq!(decode_checkpoint(&encode_checkpoint(&Checkpoint::new(net.clone()))).unwrap().network, net);
    }
}
