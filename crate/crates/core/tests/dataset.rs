//! Split sizes on the real corpus. Skipped unless `DAILYDIALOG_DIR` points at
//! a directory with `train/`, `validation/` and `test/` subdirectories.

mod common;

use socemo::corpus::{build_samples, build_samples_with, parse_corpus, SampleConfig, SplitName};

#[test]
fn split_sample_counts() {
    let Some(dir) = common::dataset_dir() else {
        eprintln!("{} not set; skipping", common::DATASET_ENV);
        return;
    };
    for (split, name, every_turn) in [
        ("train", SplitName::Train, 76052),
        ("validation", SplitName::Validation, 7070),
        ("test", SplitName::Test, 6740),
    ] {
        let [d, a, e] = common::dataset_files(&dir, split);
        let read = |p: &std::path::Path| std::fs::read_to_string(p).unwrap();
        let convs = parse_corpus(&read(&d), &read(&a), &read(&e)).unwrap();

        let full_windows: usize = convs.iter().map(|c| c.turns.len().saturating_sub(3)).sum();
        assert_eq!(build_samples(name, &convs, 3).samples.len(), full_windows, "{split}");

        let config = SampleConfig {
            min_context: 1,
            ..SampleConfig::with_window(3)
        };
        assert_eq!(build_samples_with(name, &convs, config).samples.len(), every_turn, "{split}");
    }
}
