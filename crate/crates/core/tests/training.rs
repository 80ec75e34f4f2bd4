use landscape_core::data::{hmm_generate, Hmm, HmmConfig};
use landscape_core::rng;
use landscape_core::train::{
    adv_init_train, rsgd_train, sgd_train, AdvConfig, ReplicaConfig, TrainConfig, TrainError,
};
use landscape_core::Network;

fn hmm(seed: u64) -> Hmm {
    hmm_generate(&HmmConfig {
        latent_dim: 40,
        input_dim: 201,
        train_size: 80,
        test_size: 400,
        seed,
    })
    .unwrap()
}

fn binary_cfg(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 20,
        ..TrainConfig::binary_default(seed)
    }
}

#[test]
fn sgd_is_deterministic_per_seed() {
    let h = hmm(1);
    let net = Network::perceptron(201, &mut rng::rng(2)).unwrap();
    let (a, ta) = sgd_train(&net, &h.train, Some(&h.test), &binary_cfg(3, 20)).unwrap();
    let (b, tb) = sgd_train(&net, &h.train, Some(&h.test), &binary_cfg(3, 20)).unwrap();
    let (c, _) = sgd_train(&net, &h.train, Some(&h.test), &binary_cfg(4, 20)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_ne!(a.params(), c.params());
    assert_eq!(ta.epochs.len(), 20);
    assert!(ta.epochs.iter().all(|e| e.test_error.is_some()));
}

#[test]
fn sgd_fits_a_small_perceptron_problem() {
    let h = hmm(5);
    let net = Network::perceptron(201, &mut rng::rng(6)).unwrap();
    let before = net.train_error(&h.train).unwrap();
    let (trained, trace) = sgd_train(&net, &h.train, None, &binary_cfg(7, 100)).unwrap();
    assert_eq!(trace.final_train_error, trained.train_error(&h.train).unwrap());
    assert!(trace.final_train_error < before);
    assert!(trace.final_train_error < 0.05, "{}", trace.final_train_error);
    assert!(trained.is_binary());
}

#[test]
fn continuous_sgd_fits_with_cosine_schedule() {
    let h = hmm(8);
    let net = Network::mlp(&[201, 16, 1], false, true, &mut rng::rng(9)).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 16,
        lr0: 0.05,
        loss: landscape_core::train::Loss::BinaryCrossEntropy,
        ..TrainConfig::continuous_default(10)
    };
    let (trained, trace) = sgd_train(&net, &h.train, None, &cfg).unwrap();
    assert_eq!(trace.final_train_error, 0.0);
    assert!(trace.epochs.last().unwrap().lr < cfg.lr0 * 0.01);
    assert!(trace.epochs.first().unwrap().loss > trace.epochs.last().unwrap().loss);
    assert!(!trained.is_binary());
}

#[test]
fn rsgd_returns_a_solution_deterministically() {
    let h = hmm(11);
    let net = Network::perceptron(201, &mut rng::rng(12)).unwrap();
    let rep = ReplicaConfig {
        num_replicas: 3,
        ..ReplicaConfig::standard()
    };
    let (a, ta) = rsgd_train(&net, &h.train, None, &binary_cfg(13, 100), &rep).unwrap();
    let (b, _) = rsgd_train(&net, &h.train, None, &binary_cfg(13, 100), &rep).unwrap();
    assert_eq!(a, b);
    assert!(ta.final_train_error < 0.05, "{}", ta.final_train_error);
}

#[test]
fn adversarial_pretraining_lands_far_from_the_clean_labels() {
    let h = hmm(14);
    let net = Network::perceptron(201, &mut rng::rng(15)).unwrap();
    let cfg = AdvConfig {
        replication: 4,
        zero_pixel_fraction: 0.1,
        keep_original: true,
        pretrain: binary_cfg(16, 30),
        finetune: binary_cfg(17, 100),
    };
    let (trained, trace) = adv_init_train(&net, &h.train, None, &cfg, 18).unwrap();
    assert_eq!(trace.pretrain.epochs.len(), 30);
    assert_eq!(trace.finetune.epochs.len(), 100);
    assert!(trace.pretrain_clean_error > 0.1, "{}", trace.pretrain_clean_error);
    assert_eq!(trace.finetune.final_train_error, trained.train_error(&h.train).unwrap());
}

#[test]
fn invalid_configs_are_rejected() {
    let h = hmm(19);
    let net = Network::perceptron(201, &mut rng::rng(20)).unwrap();
    let bad = TrainConfig {
        batch_size: 0,
        ..binary_cfg(0, 1)
    };
    assert!(matches!(sgd_train(&net, &h.train, None, &bad), Err(TrainError::Config(_))));
    let rep = ReplicaConfig {
        num_replicas: 1,
        ..ReplicaConfig::standard()
    };
    assert!(matches!(
        rsgd_train(&net, &h.train, None, &binary_cfg(0, 1), &rep),
        Err(TrainError::Config(_))
    ));
    let wrong = Network::perceptron(50, &mut rng::rng(21)).unwrap();
    assert!(sgd_train(&wrong, &h.train, None, &binary_cfg(0, 1)).is_err());
}

#[test]
fn hmm_labels_follow_the_teacher_and_are_balanced() {
    let h = hmm_generate(&HmmConfig {
        latent_dim: 30,
        input_dim: 61,
        train_size: 2000,
        test_size: 10,
        seed: 22,
    })
    .unwrap();
    assert_eq!(h.teacher.len(), 30);
    assert!(h.train.inputs.iter().all(|&v| v == 1.0 || v == -1.0));
    let pos = h.train.labels.iter().filter(|&&y| y == 1).count() as f64 / 2000.0;
    assert!((pos - 0.5).abs() < 0.05, "{pos}");
    assert!(h.train.labels.iter().all(|&y| y == 1 || y == -1));
}
