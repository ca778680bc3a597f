//! Compiles and runs a real C client against the generated header and the
//! staticlib, then cross-checks the logits it prints against in-process
//! inference, bit for bit.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

use adact::activation::ActivationKind;
use adact::model::{Model, ModelSpec};
use adact::tensor::{Rng, Tensor};

const SEED_IN_CHECKPOINT: u64 = 31;

/// One batch of two 4-feature samples, duplicated in the C source below.
const INPUT: [f64; 8] = [0.1, -0.2, 0.3, -0.4, 1.5, -2.5, 0.25, 0.75];

const C_SOURCE: &str = r#"
#include "adact.h"
#include <math.h>
#include <stdio.h>
#include <string.h>

static int failures = 0;
static void check(int cond, const char *what) {
  if (!cond) {
    fprintf(stderr, "FAIL: %s\n", what);
    failures++;
  }
}

int main(int argc, char **argv) {
  check(argc == 2, "usage: smoke <checkpoint>");
  check(strcmp(adact_version(), "0.1.0") == 0, "version string");

  /* The default quadruple (1, 0, 0, 0) reproduces max(z, 0). */
  double z[5] = {-2.0, -0.5, 0.0, 0.5, 3.0};
  double y[5] = {0};
  check(adact_activation_forward("arelu", 1, 0, 0, 0, z, 5, y) == ADACT_STATUS_OK,
        "arelu forward status");
  for (int i = 0; i < 5; i++)
    check(y[i] == (z[i] > 0 ? z[i] : 0.0), "arelu forward value");

  /* Backward at the same quadruple. Ties go to the first branch, so z = 0
   * counts as active: dz = a on active points and b elsewhere, and the four
   * scalar gradients accumulate z*up / up over their branch. */
  double up[5] = {1, 1, 1, 1, 1};
  double dz[5] = {0};
  double dp[4] = {0};
  check(adact_activation_backward("arelu", 1, 0, 0, 0, z, up, 5, dz, dp) == ADACT_STATUS_OK,
        "arelu backward status");
  double dz_want[5] = {0, 0, 1, 1, 1};
  for (int i = 0; i < 5; i++)
    check(dz[i] == dz_want[i], "arelu backward dz");
  check(dp[0] == 3.5, "da = sum of z*up over the active branch");
  check(dp[1] == -2.5, "db = sum of z*up over the other branch");
  check(dp[2] == 3.0, "dc = sum of up over the active branch");
  check(dp[3] == 2.0, "dd = sum of up over the other branch");

  /* Fixed kinds carry no adaptive scalars and must be rejected. */
  check(adact_activation_forward("relu", 1, 0, 0, 0, z, 5, y) == ADACT_STATUS_INVALID_ARGUMENT,
        "fixed kind rejected");
  char msg[256] = {0};
  size_t len = adact_last_error(msg, sizeof msg);
  check(len > 0 && len == strlen(msg), "error message retrievable");
  check(strstr(msg, "relu") != NULL, "error message names the kind");

  double bad[1] = {NAN};
  check(adact_activation_forward("arelu", 1, 0, 0, 0, bad, 1, y) == ADACT_STATUS_NON_FINITE,
        "NaN input rejected");

  check(adact_model_load(NULL, NULL) == ADACT_STATUS_NULL_ARGUMENT, "null path rejected");
  adact_model_free(NULL); /* must be a no-op */

  AdactModel *missing = NULL;
  check(adact_model_load("/nonexistent/model.ckpt", &missing) == ADACT_STATUS_IO_ERROR,
        "missing checkpoint is an I/O error");
  check(missing == NULL, "failed load leaves the handle untouched");

  AdactModel *m = NULL;
  check(adact_model_load(argv[1], &m) == ADACT_STATUS_OK, "checkpoint loads");
  uint64_t seed = 0;
  check(adact_model_seed(m, &seed) == ADACT_STATUS_OK && seed == 31, "recorded seed");
  size_t in_len = 0, classes = 0;
  check(adact_model_input_len(m, &in_len) == ADACT_STATUS_OK && in_len == 4, "input length");
  check(adact_model_classes(m, &classes) == ADACT_STATUS_OK && classes == 3, "class count");

  double x[8] = {0.1, -0.2, 0.3, -0.4, 1.5, -2.5, 0.25, 0.75};
  double logits[6] = {0};
  check(adact_model_infer(m, x, 8, logits, 6) == ADACT_STATUS_OK, "batch of two infers");
  for (int i = 0; i < 6; i++)
    printf("logit %.17g\n", logits[i]);

  check(adact_model_infer(m, x, 7, logits, 6) == ADACT_STATUS_DIMENSION_MISMATCH,
        "ragged batch rejected");
  check(adact_model_infer(m, x, 8, logits, 5) == ADACT_STATUS_DIMENSION_MISMATCH,
        "wrong output length rejected");
  adact_model_free(m);

  if (failures) {
    fprintf(stderr, "%d checks failed\n", failures);
    return 1;
  }
  puts("C SMOKE OK");
  return 0;
}
"#;

/// The staticlib cargo built alongside this test binary.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let debug = exe.parent().unwrap().parent().unwrap();
    let lifted = debug.join("libadact_ffi.a");
    if lifted.exists() {
        return lifted;
    }
    let mut candidates: Vec<PathBuf> = fs::read_dir(debug.join("deps"))
        .unwrap()
        .filter_map(|e| Some(e.ok()?.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("libadact_ffi") && n.ends_with(".a"))
        })
        .collect();
    candidates.sort_by_key(|p| fs::metadata(p).and_then(|m| m.modified()).ok());
    candidates
        .pop()
        .expect("staticlib built alongside the test")
}

#[test]
fn c_client_builds_runs_and_matches_rust_inference() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("c-smoke");
    fs::create_dir_all(&dir).unwrap();

    // A small real model for the C side to load.
    let spec = ModelSpec::mlp2(vec![1, 2, 2], 3, ActivationKind::ASigmoid);
    let model = Model::init(&spec, &mut Rng::new(9)).unwrap();
    let ckpt = dir.join("model.ckpt");
    model.save(&ckpt, SEED_IN_CHECKPOINT).unwrap();

    let c_file = dir.join("smoke.c");
    fs::write(&c_file, C_SOURCE).unwrap();
    let exe = dir.join("smoke");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");

    let compile = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Wextra", "-Werror", "-I"])
        .arg(&include)
        .arg(&c_file)
        .arg(static_lib())
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "cc failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&exe).arg(&ckpt).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(
        run.status.success(),
        "smoke failed:\nstdout:\n{stdout}\nstderr:\n{stderr}"
    );
    assert!(stdout.contains("C SMOKE OK"), "{stdout}");

    // The logits printed by C (%.17g round-trips doubles exactly) must be
    // bit-identical to in-process inference.
    let got: Vec<f64> = stdout
        .lines()
        .filter_map(|l| l.strip_prefix("logit "))
        .map(|v| v.parse().unwrap())
        .collect();
    let x = Tensor::new(vec![2, 1, 2, 2], INPUT.to_vec()).unwrap();
    let want = model.infer(&x).unwrap();
    assert_eq!(got.len(), want.data().len());
    for (i, (g, w)) in got.iter().zip(want.data()).enumerate() {
        assert_eq!(
            g.to_bits(),
            w.to_bits(),
            "logit {i}: C gave {g}, Rust gave {w}"
        );
    }
}
