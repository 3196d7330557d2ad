use aqcl::alpha::AlphaSchedule;
use aqcl::augment::AugmentConfig;
use aqcl::codebook::SinkhornConfig;
use aqcl::data::{self, Bucket, Dataset, GeneratorConfig, SplitSpec, Splits};
use aqcl::loss::LossConfig;
use aqcl::model::ModelConfig;
use aqcl::trainer::{self, AuxMode, TrainConfig, TrainSetup};

fn run(ds: &Dataset, splits: &Splits, aux: AuxMode, w: f64, seed: u64) -> String {
    let mean_len = data::mean_history_length(ds, &splits.train);
    let setup = TrainSetup {
        model: ModelConfig {
            num_users: ds.num_users,
            num_items: ds.num_items,
            extra_vocab_sizes: ds.extra_vocab_sizes.clone(),
            ..ModelConfig::default()
        },
        loss: LossConfig { aux_weight: w, ..LossConfig::default() },
        augment: AugmentConfig::default(),
        codebook_capacity: 32,
        tau3: 0.1,
        sinkhorn: SinkhornConfig::default(),
        schedule: AlphaSchedule::new(1.0, 1.0, mean_len).unwrap(),
        train: TrainConfig {
            batch_size: 256,
            learning_rate: 0.003,
            max_epochs: 16,
            patience: 3,
            seed,
            aux,
            ..TrainConfig::default()
        },
    };
    let t = std::time::Instant::now();
    let out = trainer::train(&setup, ds, splits).unwrap();
    let r = trainer::evaluate(&out.params, ds, &splits.test, splits).unwrap();
    format!(
        "{:?} w={} seed {}: {:.0}s best e{} of {} | test auc {:.4} non {:.4} slight {:.4} high {:.4} | val curve {:?}",
        aux, w, seed,
        t.elapsed().as_secs_f64(),
        out.best_epoch,
        out.trace.epochs.len(),
        r.overall.auc.unwrap(),
        r.buckets[Bucket::NonActive.index()].auc.unwrap(),
        r.buckets[Bucket::SlightlyActive.index()].auc.unwrap(),
        r.buckets[Bucket::HighlyActive.index()].auc.unwrap(),
        out.trace.epochs.iter().map(|e| (e.val_auc.unwrap() * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
    )
}

fn main() {
    let gen_cfg = GeneratorConfig {
        n_users: 10_000,
        n_items: 1_000,
        n_interests: 8,
        seed: 42,
        ..GeneratorConfig::default()
    };
    let ds = data::generate(&gen_cfg).unwrap();
    let bounds = data::boundaries(&ds, &SplitSpec::default()).unwrap();
    let splits = data::split_and_bucket(&ds, bounds, None).unwrap();

    let jobs: Vec<(AuxMode, f64, u64)> = vec![
        (AuxMode::None, 0.0, 1),
        (AuxMode::Aqcl, 0.01, 1),
        (AuxMode::Aqcl, 0.005, 1),
        (AuxMode::None, 0.0, 2),
        (AuxMode::Aqcl, 0.01, 2),
    ];
    let lines: Vec<String> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(aux, w, seed)| {
                let ds = &ds;
                let splits = &splits;
                scope.spawn(move || run(ds, splits, aux, w, seed))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for l in lines {
        println!("{l}");
    }
}
