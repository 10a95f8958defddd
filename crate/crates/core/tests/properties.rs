use mas_core::align::{token_char_ranges, CharSpan};
use mas_core::{
    align_span, compute_masks, convert, mas_scores, parse_jsonl, read_dump, synth_dump, write_dump,
    CandidateAttentionMatrix, SchemaInstance, TiePolicy,
};
use proptest::prelude::*;

/// Per-cell winner loop, written without masks: each cell's maximum is
/// credited to the candidate holding it.
fn oracle_sums(matrices: &[Vec<f64>]) -> Vec<f64> {
    let cells = matrices[0].len();
    let mut sums = vec![0.0; matrices.len()];
    for cell in 0..cells {
        let mut best = 0;
        for c in 1..matrices.len() {
            if matrices[c][cell] > matrices[best][cell] {
                best = c;
            }
        }
        sums[best] += matrices[best][cell];
    }
    sums
}

fn has_cell_ties(matrices: &[Vec<f64>]) -> bool {
    (0..matrices[0].len()).any(|cell| {
        let mut vals: Vec<f64> = matrices.iter().map(|m| m[cell]).collect();
        vals.sort_by(f64::total_cmp);
        vals.windows(2).any(|w| w[0] == w[1])
    })
}

fn to_matrices(layers: usize, heads: usize, raw: &[Vec<f64>]) -> Vec<CandidateAttentionMatrix> {
    raw.iter()
        .enumerate()
        .map(|(c, v)| CandidateAttentionMatrix {
            candidate_index: c,
            layers,
            heads,
            values: v.clone(),
        })
        .collect()
}

fn grids() -> impl Strategy<Value = (usize, usize, Vec<Vec<f64>>)> {
    (1usize..6, 1usize..6, 2usize..6).prop_flat_map(|(l, h, m)| {
        (
            Just(l),
            Just(h),
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, l * h), m),
        )
    })
}

proptest! {
    #[test]
    fn hadamard_sums_match_cell_oracle((l, h, raw) in grids()) {
        prop_assume!(!has_cell_ties(&raw));
        let mats = to_matrices(l, h, &raw);
        let masks = compute_masks(&mats, TiePolicy::NoneWins).unwrap();
        // exclusivity
        for cell in 0..l * h {
            prop_assert_eq!(masks.iter().map(|m| m.bits[cell] as usize).sum::<usize>(), 1);
        }
        let result = mas_scores(&mats, &masks, "p").unwrap();
        for (got, want) in result.hadamard_sums.iter().zip(oracle_sums(&raw)) {
            prop_assert!((got - want).abs() < 1e-12);
        }
        let total: f64 = result.scores.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(result.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn mask_bits_sit_on_maxima((l, h, raw) in grids(), policy in 0usize..3) {
        let tie = [TiePolicy::NoneWins, TiePolicy::AllWin, TiePolicy::LowestIndexWins][policy];
        let mats = to_matrices(l, h, &raw);
        let masks = compute_masks(&mats, tie).unwrap();
        for cell in 0..l * h {
            let best = raw.iter().map(|m| m[cell]).fold(f64::NEG_INFINITY, f64::max);
            let on: Vec<usize> = (0..raw.len()).filter(|&c| masks[c].bits[cell] == 1).collect();
            for &c in &on {
                prop_assert_eq!(raw[c][cell], best);
            }
            if tie != TiePolicy::AllWin {
                prop_assert!(on.len() <= 1);
            }
        }
    }

    #[test]
    fn permutation_equivariance((l, h, raw) in grids(), rot in 0usize..5) {
        prop_assume!(!has_cell_ties(&raw));
        let m = raw.len();
        let rot = rot % m;
        let permuted: Vec<Vec<f64>> = (0..m).map(|i| raw[(i + rot) % m].clone()).collect();

        let a_m = to_matrices(l, h, &raw);
        let a = mas_scores(&a_m, &compute_masks(&a_m, TiePolicy::NoneWins).unwrap(), "a").unwrap();
        let b_m = to_matrices(l, h, &permuted);
        let b_masks = compute_masks(&b_m, TiePolicy::NoneWins).unwrap();
        let b = mas_scores(&b_m, &b_masks, "b").unwrap();
        let a_masks = compute_masks(&a_m, TiePolicy::NoneWins).unwrap();
        for (i, mask) in b_masks.iter().enumerate() {
            let src = (i + rot) % m;
            prop_assert!((b.scores[i] - a.scores[src]).abs() < 1e-12);
            prop_assert_eq!(&mask.bits, &a_masks[src].bits);
        }
        if !a.tie_flag {
            prop_assert_eq!((b.decision + rot) % m, a.decision);
        }
    }

    #[test]
    fn uniform_scaling_leaves_scores((l, h, raw) in grids(), k in 0.01f64..100.0) {
        prop_assume!(!has_cell_ties(&raw));
        let a_m = to_matrices(l, h, &raw);
        let a = mas_scores(&a_m, &compute_masks(&a_m, TiePolicy::NoneWins).unwrap(), "a");
        let scaled: Vec<Vec<f64>> = raw.iter().map(|v| v.iter().map(|x| x * k).collect()).collect();
        let b_m = to_matrices(l, h, &scaled);
        let b = mas_scores(&b_m, &compute_masks(&b_m, TiePolicy::NoneWins).unwrap(), "b");
        match (a, b) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.scores.iter().zip(&b.scores) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
                prop_assert_eq!(a.decision, b.decision);
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn raising_a_won_cell((l, h, raw) in grids(), cell_pick in 0usize..1000, delta in 0.001f64..0.5) {
        prop_assume!(!has_cell_ties(&raw));
        let cell = cell_pick % (l * h);
        let mats = to_matrices(l, h, &raw);
        let before = mas_scores(&mats, &compute_masks(&mats, TiePolicy::NoneWins).unwrap(), "a").unwrap();
        let winner = (0..raw.len()).max_by(|&a, &b| raw[a][cell].total_cmp(&raw[b][cell])).unwrap();

        let mut bumped = raw.clone();
        bumped[winner][cell] += delta;
        let mats = to_matrices(l, h, &bumped);
        let after = mas_scores(&mats, &compute_masks(&mats, TiePolicy::NoneWins).unwrap(), "b").unwrap();

        for c in 0..raw.len() {
            let want = before.hadamard_sums[c] + if c == winner { delta } else { 0.0 };
            prop_assert!((after.hadamard_sums[c] - want).abs() < 1e-12);
        }
        if before.scores[winner] < 1.0 {
            prop_assert!(after.scores[winner] > before.scores[winner]);
        }
    }

    #[test]
    fn dump_round_trip(layers in 1usize..4, heads in 1usize..4, t in 3usize..9, seed in any::<u64>(), boost in 0.0f64..0.99) {
        let tokens: Vec<String> = (0..t).map(|i| format!("w{i}")).collect();
        let dump = synth_dump(&tokens, layers, heads, 1, t - 1, boost, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d");
        write_dump(&dump, &path).unwrap();
        let back = read_dump(&path).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.attention), bits(&dump.attention));
        prop_assert_eq!(back, dump);
    }
}

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{1,8}",
        "[A-Z][a-z]{0,6}",
        Just("café".to_string()),
        Just("Zoë".to_string()),
        Just(",".to_string()),
        Just(".".to_string()),
    ]
}

/// Sentence plus a WordPiece-like tokenization of it: words split at a
/// random point into a head and a `##` continuation.
fn tokenized() -> impl Strategy<Value = (String, Vec<String>)> {
    prop::collection::vec((word(), 0usize..4, 1usize..3), 1..10).prop_map(|words| {
        let mut sentence = String::new();
        let mut tokens = vec!["[CLS]".to_string()];
        for (w, cut, spaces) in words {
            if !sentence.is_empty() {
                sentence.push_str(&" ".repeat(spaces));
            }
            sentence.push_str(&w);
            let lower: String = w.to_lowercase().replace(['é', 'ë'], "e");
            let chars: Vec<char> = lower.chars().collect();
            if cut > 0 && cut < chars.len() {
                tokens.push(chars[..cut].iter().collect());
                tokens.push(format!("##{}", chars[cut..].iter().collect::<String>()));
            } else {
                tokens.push(lower);
            }
        }
        tokens.push("[SEP]".to_string());
        (sentence, tokens)
    })
}

proptest! {
    #[test]
    fn alignment_covers_span((sentence, tokens) in tokenized(), a in 0usize..200, b in 0usize..200) {
        let chars: Vec<char> = sentence.chars().collect();
        let (mut s, mut e) = (a % chars.len(), b % chars.len());
        if s > e { std::mem::swap(&mut s, &mut e); }
        let e = e + 1;
        prop_assume!(!chars[s].is_whitespace() && !chars[e - 1].is_whitespace());
        let span = CharSpan::new(&sentence, s, e).unwrap();

        let ranges = token_char_ranges(&tokens, &sentence, true).unwrap();
        // every non-whitespace char belongs to exactly one token
        for (i, c) in chars.iter().enumerate() {
            let owners = ranges.iter().flatten().filter(|(rs, re)| *rs <= i && i < *re).count();
            prop_assert_eq!(owners, usize::from(!c.is_whitespace()));
        }

        let al = align_span(&tokens, &sentence, &span, true).unwrap();
        prop_assert!(!al.token_indices.is_empty());
        prop_assert!(al.token_indices.windows(2).all(|w| w[1] == w[0] + 1));
        prop_assert!(al.token_indices.iter().all(|&i| i != 0 && i != tokens.len() - 1));

        // concatenated token text covers the span text
        let joined: String = al.token_indices.iter()
            .map(|&i| tokens[i].trim_start_matches("##").to_string())
            .collect();
        let fold = |x: &str| x.to_lowercase().replace(['é', 'ë'], "e")
            .chars().filter(|c| !c.is_whitespace()).collect::<String>();
        prop_assert!(fold(&joined).contains(&fold(&span.surface)));

        prop_assert_eq!(align_span(&tokens, &sentence, &span, true).unwrap(), al);
    }

    #[test]
    fn jsonl_identity(
        words in prop::collection::vec("[A-Za-z]{1,7}", 3..12),
        pick in 0usize..100,
        cands in prop::collection::vec("[a-z ]{0,6}[a-z]", 2..9),
        gold in prop::option::of(0usize..8),
        n in 1usize..4,
    ) {
        let sentence = words.join(" ");
        let idx = pick % words.len();
        let start: usize = words[..idx].iter().map(|w| w.len() + 1).sum();
        let gold = gold.filter(|&g| g < cands.len());
        let instances: Vec<SchemaInstance> = (0..n)
            .map(|k| SchemaInstance::new(format!("wsc273-{k:03}"), sentence.clone(), &words[idx], start, cands.clone(), gold).unwrap())
            .collect();
        let bytes = convert(&instances);
        prop_assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), n);
        prop_assert_eq!(parse_jsonl(&bytes).unwrap(), instances);
    }
}
