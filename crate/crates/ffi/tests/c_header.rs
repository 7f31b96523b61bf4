//! Compiles a C program against the generated header and static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "dabea.h"

int main(void) {
    const char *ids[14];
    char names[14][8];
    size_t classes[14];
    for (int i = 0; i < 14; i++) {
        snprintf(names[i], sizeof names[i], "im%d", i);
        ids[i] = names[i];
        classes[i] = (size_t)(i % DABEA_NUM_CLASSES);
    }
    DabeaLabels *labels = NULL;
    if (dabea_labels_new(ids, classes, 14, &labels) != DABEA_STATUS_OK) return 10;

    DabeaPredictions *a = NULL, *b = NULL;
    if (dabea_predictions_synth(labels, 4, 2.0, 0.5, 1, "a", &a) != DABEA_STATUS_OK) return 11;
    if (dabea_predictions_synth(labels, 4, 2.0, 0.5, 2, "b", &b) != DABEA_STATUS_OK) return 12;
    const DabeaPredictions *sets[2] = {a, b};
    DabeaBag *bag = NULL;
    if (dabea_bag_new(sets, 2, 5, 7, &bag) != DABEA_STATUS_OK) return 13;
    DabeaFusion *fusion = NULL;
    if (dabea_fusion_train(bag, labels, 3, 1e-3, DABEA_LAYOUT_SHARED, 7, NULL, 0, &fusion) != DABEA_STATUS_OK) return 14;
    DabeaSlots *slots = NULL;
    if (dabea_fusion_forward(bag, fusion, &slots) != DABEA_STATUS_OK) return 15;
    DabeaPooled *pooled = NULL;
    if (dabea_pool(slots, DABEA_POOL_EXTREME, &pooled) != DABEA_STATUS_OK) return 16;
    double ba = -1.0;
    if (dabea_balanced_accuracy(pooled, labels, DABEA_ZERO_SUPPORT_EXCLUDE, &ba) != DABEA_STATUS_OK) return 17;

    if (dabea_pool(slots, 42, &pooled) != DABEA_STATUS_INVALID_ARGUMENT) return 18;
    if (dabea_last_error() == NULL || strstr(dabea_last_error(), "pooling") == NULL) return 19;

    printf("balanced_accuracy=%.6f version=%s\n", ba, dabea_version());
    dabea_pooled_free(pooled);
    dabea_slots_free(slots);
    dabea_fusion_free(fusion);
    dabea_bag_free(bag);
    dabea_predictions_free(a);
    dabea_predictions_free(b);
    dabea_labels_free(labels);
    return 0;
}
"#;

fn profile_dir() -> PathBuf {
    // target/<profile>/deps/<this test> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = profile_dir().join("libdabea_ffi.a");
    assert!(lib.is_file(), "static library not found at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();

    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C compilation failed");

    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("balanced_accuracy="), "{stdout}");
}
