//! Golden-file checks for rendered prompts. The committed files pin the
//! template bytes; any template or rounding change must be blessed on
//! purpose with `BLESS=1 cargo test -p pictext --test prompt_golden`.

use pictext::model::{BBoxNorm, EntityPhrase, ObjectAnnotation};
use pictext::prompting::{render_extract_prompt, render_recaption_prompt, TEMPLATE_VERSION};
use std::path::Path;

fn check(name: &str, rendered: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, rendered).unwrap();
        return;
    }
    let committed = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {}: {e}; rerun with BLESS=1", name));
    assert_eq!(
        rendered, committed,
        "rendered {name} differs from the committed golden; rerun with BLESS=1 if intended"
    );
}

#[test]
fn extract_prompt_matches_golden() {
    let bundle = render_extract_prompt(
        "A black cat sits on a gray nightstand next to a beige lamp.",
        TEMPLATE_VERSION,
    );
    assert!(bundle.warnings.is_empty());
    check("extract_prompt.txt", &bundle.rendered);
}

#[test]
fn recaption_prompt_matches_golden() {
    let hallucinations =
        vec![EntityPhrase::new("a traffic light").unwrap(), EntityPhrase::new("a bus").unwrap()];
    let objects = vec![
        ObjectAnnotation {
            phrase: EntityPhrase::new("the clock face is white").unwrap(),
            bbox: BBoxNorm::new(0.23, 0.06, 0.55, 0.31).unwrap(),
            depth_rel: 1.0,
            size_frac: 0.0558,
            mask_fallback: false,
        },
        ObjectAnnotation {
            phrase: EntityPhrase::new("a person walking on the sidewalk").unwrap(),
            bbox: BBoxNorm::new(0.98, 0.57, 1.0, 0.6).unwrap(),
            depth_rel: 0.0,
            size_frac: 0.0005,
            mask_fallback: false,
        },
    ];
    let bundle = render_recaption_prompt(
        "At the center of the frame is a black clock mounted on a pole, with a street beyond.",
        &hallucinations,
        &objects,
        TEMPLATE_VERSION,
    );
    assert!(bundle.warnings.is_empty());
    check("recaption_prompt.txt", &bundle.rendered);
}
