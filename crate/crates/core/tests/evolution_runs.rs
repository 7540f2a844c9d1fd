use mge::data::{make_blobs, normalize_minmax, split};
use mge::evolution::{accuracy, cross_entropy, evolve, EvolutionConfig, FlatRepr, ModularRepr, WORST};
use mge::grammar::{build_network_grammar, build_neuron_grammar, NeuronGrammarOptions};
use mge::mapping::Variant;
use mge::rng::seeded;

fn blobs() -> mge::data::Split {
    let ds = make_blobs(150, 2, 3, 6.0, &mut seeded(21)).unwrap();
    normalize_minmax(&split(&ds, 0.7, true, &mut seeded(22)).unwrap()).0
}

fn repr(variant: Variant) -> ModularRepr {
    ModularRepr {
        grammar: build_neuron_grammar(2, 3, variant, &NeuronGrammarOptions::default()),
        variant,
        classes: 3,
        sigma_range: (2, 10),
        gene_length: 100,
    }
}

fn config(variant: Variant, seed: u64) -> EvolutionConfig {
    EvolutionConfig {
        mu: 40,
        generations: 25,
        variant,
        seed,
        ..EvolutionConfig::default()
    }
}

#[test]
fn every_variant_learns_separated_blobs() {
    let s = blobs();
    for variant in Variant::MODULAR {
        let cfg = EvolutionConfig {
            generations: 100,
            ..config(variant, 3)
        };
        let r = evolve(&cfg, &repr(variant), |n| cross_entropy(n, &s.train), |_, _| {}).unwrap();
        let net = r.best.phenotype.network().unwrap();
        let first = r.history[0].best_loss;
        let last = r.history.last().unwrap().best_loss;
        assert!(last < first, "{variant}: {first} -> {last}");
        assert!(accuracy(net, &s.train) > 0.9, "{variant}: {}", accuracy(net, &s.train));
        assert!(r.history.windows(2).all(|w| w[1].best_loss <= w[0].best_loss));
    }
}

#[test]
fn evaluation_count_and_history_length() {
    let s = blobs();
    let mut seen = 0;
    let cfg = config(Variant::Mge, 4);
    let r = evolve(&cfg, &repr(Variant::Mge), |n| cross_entropy(n, &s.train), |stats, pop| {
        assert_eq!(stats.generation, seen);
        assert_eq!(pop.len(), 40);
        seen += 1;
    })
    .unwrap();
    assert_eq!(seen, 26);
    assert_eq!(r.history.len(), 26);
    assert_eq!(r.evaluations, 40 * 26);
    assert_eq!(r.final_population.len(), 40);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = blobs();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let r = evolve(&config(Variant::Beta, 5), &repr(Variant::Beta), |n| cross_entropy(n, &s.train), |_, _| {})
                .unwrap();
            (r.history, r.best.genotype)
        })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn flat_baseline_evolves_and_keeps_worst_for_invalid() {
    let s = blobs();
    let repr = FlatRepr {
        grammar: build_network_grammar(2, 3, &NeuronGrammarOptions::default()),
        classes: 3,
        length_range: (200, 600),
        max_wraps: 0,
        block: 100,
    };
    let cfg = config(Variant::GeBaseline, 6);
    let r = evolve(&cfg, &repr, |n| cross_entropy(n, &s.train), |_, pop| {
        for ind in pop {
            assert_eq!(ind.fitness == WORST, !ind.phenotype.is_valid());
        }
    })
    .unwrap();
    assert!(r.best.fitness < WORST);
}
