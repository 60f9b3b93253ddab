//! Regenerates the seed corpus for the fuzz targets:
//! `cargo run -p trackloc --example gen_fuzz_corpus -- fuzz/corpus`

use std::fs;
use std::path::Path;

use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trackloc::io::checkpoint::encode_checkpoint;
use trackloc::io::features::encode_features;
use trackloc::model::{CellKind, FusionMode, ModelDims, ModelParams};
use trackloc::track::StreamTag;

fn write(dir: &Path, target: &str, name: &str, bytes: &[u8]) {
    let d = dir.join(target);
    fs::create_dir_all(&d).expect("create corpus dir");
    fs::write(d.join(name), bytes).expect("write seed");
}

fn main() {
    let root = std::env::args().nth(1).unwrap_or_else(|| "fuzz/corpus".to_string());
    let root = Path::new(&root);

    write(
        root,
        "tracks_jsonl",
        "track_line",
        concat!(
            r#"{"video":"v000","track":"t0","start":4,"boxes":[[0,0,26,42],[1,0.5,27,42.5]],"#,
            r#""features":{"appearance":"features/v000_t0.appearance.tfv","flow":"features/v000_t0.flow.tfv"}}"#,
            "\n"
        )
        .as_bytes(),
    );
    write(
        root,
        "gt_jsonl",
        "gt_line",
        b"{\"video\":\"v000\",\"class\":2,\"start\":10,\"boxes\":[[5,5,30,47],[5,5,30,47]]}\n",
    );
    write(
        root,
        "detections_jsonl",
        "det_line",
        b"{\"video\":\"v000\",\"class\":1,\"start\":8,\"end\":9,\"score\":0.75,\"boxes\":[[2,3,28,45],[2,3,28,45]]}\n",
    );
    write(
        root,
        "run_config",
        "run_cfg",
        b"# sample run\nseed = 42\nout = runs/demo\nsynth.videos = 4\nloc.theta = 0.1\ntrain.cell = gru\n",
    );

    let feats = array![[0.25f64, -1.5, 3.0], [0.0, 2.0, -0.125]];
    write(root, "features_tfv1", "small_matrix", &encode_features(&feats).unwrap());

    let dims = ModelDims {
        cell: CellKind::Gru,
        fusion: FusionMode::Single,
        d_raw: 3,
        d_norm: 2,
        hidden: 2,
        n_classes: 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = ModelParams::init(dims, &[StreamTag::Appearance], &mut rng).unwrap();
    write(root, "checkpoint_rln1", "tiny_model", &encode_checkpoint(&model));

    println!("seed corpus written under {}", root.display());
}
