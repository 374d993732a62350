"""Block library, corpus generators, benchmark ingestion, and windowing."""

import json
import math
import random

import pytest

from evonas import arch as A
from evonas import corpus as C
from evonas.errors import ConfigError, GraphError, ParseError, UnknownLayerError


@pytest.fixture(scope="module")
def lib():
    return C.BlockLibrary.default()


# --- library invariants -------------------------------------------------------


def test_library_has_exactly_15_distinct_kinds(lib):
    assert len(lib.kinds) == 15
    assert set(lib.kinds) == set(A.BlockKind)


@pytest.mark.parametrize("in_size", [(3, 32, 32), (32, 4, 4), (16, 8, 8), (3, 5, 7)])
@pytest.mark.parametrize("width", [1, 2, 5, 32])
def test_every_template_instantiates_everywhere(lib, in_size, width):
    for kind in lib.kinds:
        block = C.instantiate_block(lib, kind, in_size, width)
        assert block.layers[0].in_size == in_size
        for i in range(len(block.layers) - 1):
            assert block.layers[i].out_size == block.layers[i + 1].in_size
        for layer in block.layers:
            assert A.infer_out_size(layer) == layer.out_size
        if kind in C.PRESERVE_KINDS:
            assert block.out_size[0] == in_size[0]
            assert block.width_param == in_size[0]
        else:
            assert block.out_size[0] == width
            assert block.width_param == width


def test_templates_instantiate_at_spatial_one(lib):
    # stronger than the H,W >= 4 contract: pooling falls back to a unit window
    for kind in lib.kinds:
        block = C.instantiate_block(lib, kind, (32, 1, 1), 32)
        assert block.out_size[1] >= 1 and block.out_size[2] >= 1


@pytest.mark.parametrize("in_size", [(3, 32, 32), (32, 16, 16), (32, 1, 1), (8, 8, 8)])
@pytest.mark.parametrize("width", [8, 32])
def test_first_layer_keys_pairwise_distinct(lib, in_size, width):
    # the token->kind mapping is only invertible if no two kinds open with
    # the same canonical layer at the same state
    keys = {}
    for kind in lib.kinds:
        key = C.first_layer_key(lib, kind, in_size, width)
        assert key not in keys, f"{kind} collides with {keys.get(key)}"
        keys[key] = kind


def test_instantiate_is_deterministic(lib):
    a = C.instantiate_block(lib, A.BlockKind.INCEPTION, (3, 32, 32), 16)
    b = C.instantiate_block(lib, A.BlockKind.INCEPTION, (3, 32, 32), 16)
    assert [A.canonical_key(l) for l in a.layers] == [A.canonical_key(l) for l in b.layers]


def test_match_layers_inverts_instantiate(lib):
    for in_size in [(3, 32, 32), (32, 8, 8), (32, 2, 2)]:
        for kind in lib.kinds:
            block = C.instantiate_block(lib, kind, in_size, 32)
            keys = [A.canonical_key(l) for l in block.layers]
            assert lib.match_layers(keys, in_size, block.width_param) == kind


# --- fine-tune corpus ----------------------------------------------------------


def test_build_finetune_corpus_count_and_validity(lib):
    records = C.build_finetune_corpus(lib, 36, rng_seed=11)
    assert len(records) == 36
    for rec in records:
        assert rec.source == C.Source.FINETUNE_LIBRARY
        assert rec.fitness is None
        A.validate_architecture(rec.arch)


def test_build_finetune_corpus_deterministic(lib):
    a = C.build_finetune_corpus(lib, 20, rng_seed=7)
    b = C.build_finetune_corpus(lib, 20, rng_seed=7)
    assert [A.arch_hash(r.arch) for r in a] == [A.arch_hash(r.arch) for r in b]
    c = C.build_finetune_corpus(lib, 20, rng_seed=8)
    assert [A.arch_hash(r.arch) for r in a] != [A.arch_hash(r.arch) for r in c]


def test_build_finetune_corpus_500_all_decode(lib):
    records = C.build_finetune_corpus(lib, 500, rng_seed=3)
    assert len(records) == 500
    vocab = A.Vocabulary()
    for rec in records:
        A.validate_architecture(rec.arch)
        A.encode_architecture(rec.arch, vocab)
    vocab.freeze()
    for rec in records[::25]:
        seq = A.encode_architecture(rec.arch, vocab)
        back = A.decode_architecture(seq, vocab, rec.arch.input_shape,
                                     rec.arch.num_classes, lib=lib)
        assert A.arch_hash(back) == A.arch_hash(rec.arch)


# --- teacher corpus --------------------------------------------------------------


def make_absorbing_teacher():
    from evonas.evaluation import MarkovTeacher

    kinds = tuple(A.BlockKind)
    n = len(kinds)
    matrix = [[0.0] * n for _ in range(n)]
    for i in range(n):
        matrix[i][0] = 1.0  # everything funnels into kinds[0] and stays
    initial = [0.0] * n
    initial[0] = 1.0
    return MarkovTeacher(kinds=kinds, transitions=matrix, initial=initial)


def test_teacher_corpus_absorbing_chain_is_all_one_kind(lib):
    teacher = make_absorbing_teacher()
    records = C.generate_teacher_corpus(teacher, 5, rng_seed=0, lib=lib)
    for rec in records:
        assert all(b.kind == teacher.kinds[0] for b in rec.arch.blocks)
        assert rec.source == C.Source.SYNTHETIC


def test_teacher_corpus_zero_archs(lib):
    teacher = make_absorbing_teacher()
    assert C.generate_teacher_corpus(teacher, 0, rng_seed=0, lib=lib) == []


def test_teacher_corpus_rejects_bad_rows(lib):
    from evonas.evaluation import MarkovTeacher

    kinds = tuple(A.BlockKind)
    n = len(kinds)
    matrix = [[1.0 / n] * n for _ in range(n)]
    matrix[3][3] += 0.25  # row sums to 1.25
    teacher = MarkovTeacher(kinds=kinds, transitions=matrix,
                            initial=[1.0 / n] * n, validate=False)
    with pytest.raises(ConfigError):
        C.generate_teacher_corpus(teacher, 3, rng_seed=0, lib=lib)


def test_teacher_corpus_deterministic(lib):
    from evonas.evaluation import MarkovTeacher

    teacher = MarkovTeacher.default_ring()
    a = C.generate_teacher_corpus(teacher, 12, rng_seed=5, lib=lib)
    b = C.generate_teacher_corpus(teacher, 12, rng_seed=5, lib=lib)
    assert [A.arch_hash(r.arch) for r in a] == [A.arch_hash(r.arch) for r in b]


def bigram_tv(records, teacher):
    """Frequency-counter oracle: weighted mean TV between empirical conditional
    next-kind frequencies and the teacher's rows."""
    idx = {k: i for i, k in enumerate(teacher.kinds)}
    n = len(teacher.kinds)
    counts = [[0] * n for _ in range(n)]
    for rec in records:
        kinds = [b.kind for b in rec.arch.blocks]
        for a, b in zip(kinds, kinds[1:]):
            counts[idx[a]][idx[b]] += 1
    total = sum(map(sum, counts))
    tv = 0.0
    for i in range(n):
        row_n = sum(counts[i])
        if row_n == 0:
            continue
        row_tv = 0.5 * sum(
            abs(counts[i][j] / row_n - teacher.transitions[i][j]) for j in range(n))
        tv += (row_n / total) * row_tv
    return tv


def test_teacher_corpus_bigrams_converge(lib):
    from evonas.evaluation import MarkovTeacher

    teacher = MarkovTeacher.default_ring()
    tvs = {}
    for n in (100, 1000, 10000):
        records = C.generate_teacher_corpus(teacher, n, rng_seed=99, lib=lib)
        tvs[n] = bigram_tv(records, teacher)
    assert tvs[1000] <= 0.05
    assert tvs[100] > tvs[1000] > tvs[10000]


# --- windowed training pairs -----------------------------------------------------


def frozen_vocab_over(records):
    vocab = A.Vocabulary()
    for rec in records:
        A.encode_architecture(rec.arch, vocab)
    return vocab.freeze()


def test_pairs_one_per_position_40_layers(lib):
    blocks = []
    cur = (3, 32, 32)
    for _ in range(10):  # 10 x (conv5-bn-relu) + 10 x relu = 40 layers
        b = C.instantiate_block(lib, A.BlockKind.CONV_NORM_ACT, cur, 32)
        blocks.append(b)
        cur = b.out_size
        b = C.instantiate_block(lib, A.BlockKind.RELU, cur, 32)
        blocks.append(b)
        cur = b.out_size
    arch = A.assemble(tuple(blocks), (3, 32, 32), 10)
    rec = C.CorpusRecord(arch=arch, fitness=None, source=C.Source.SYNTHETIC)
    vocab = frozen_vocab_over([rec])
    pairs = C.make_training_pairs([rec], vocab)
    assert len(pairs) == 40
    seq = A.encode_architecture(arch, vocab)
    assert [p.target for p in pairs] == list(seq.tokens)
    assert all(len(p.context) == 10 for p in pairs)
    # first context is all padding, later ones carry the running prefix
    assert pairs[0].context == (vocab.pad_id,) * 10
    assert pairs[5].context == (vocab.pad_id,) * 5 + seq.tokens[:5]
    assert pairs[15].context == seq.tokens[5:15]


def test_pairs_single_layer_architecture(lib):
    block = C.instantiate_block(lib, A.BlockKind.RELU, (3, 32, 32), 3)
    arch = A.assemble((block,), (3, 32, 32), 10)
    rec = C.CorpusRecord(arch=arch, fitness=None, source=C.Source.SYNTHETIC)
    vocab = frozen_vocab_over([rec])
    pairs = C.make_training_pairs([rec], vocab)
    assert len(pairs) == 1
    assert pairs[0].context == (vocab.pad_id,) * 10


def test_pairs_conserve_token_counts(lib):
    records = C.build_finetune_corpus(lib, 10, rng_seed=2)
    vocab = frozen_vocab_over(records)
    pairs = C.make_training_pairs(records, vocab)
    total = sum(
        len(A.encode_architecture(r.arch, vocab).tokens) for r in records)
    assert len(pairs) == total


def test_pairs_unknown_token_rejected(lib):
    records = C.build_finetune_corpus(lib, 4, rng_seed=2)
    vocab = frozen_vocab_over(records[:1])
    leftover = [r for r in records[1:]
                if any(A.canonical_key(l) not in json.loads(vocab.to_json())["keys"]
                       for l in A.iter_block_layers(r.arch))]
    assert leftover, "fixture needs at least one record with unseen layers"
    with pytest.raises(UnknownLayerError):
        C.make_training_pairs(leftover, vocab)


# --- corpus file round trip -------------------------------------------------------


def test_corpus_jsonl_round_trip(tmp_path, lib):
    from evonas.evaluation import MarkovTeacher

    records = C.build_finetune_corpus(lib, 8, rng_seed=21)
    records += C.generate_teacher_corpus(MarkovTeacher.default_ring(), 4,
                                         rng_seed=22, lib=lib)
    path = tmp_path / "corpus.jsonl"
    C.save_corpus(records, path)
    back = C.load_corpus(path)
    assert len(back) == len(records)
    for orig, loaded in zip(records, back):
        assert A.arch_hash(loaded.arch) == A.arch_hash(orig.arch)
        assert loaded.source == orig.source
        assert loaded.fitness == orig.fitness
        assert [b.kind for b in loaded.arch.blocks] == [b.kind for b in orig.arch.blocks]


def test_corpus_load_reports_bad_line(tmp_path, lib):
    records = C.build_finetune_corpus(lib, 2, rng_seed=1)
    path = tmp_path / "corpus.jsonl"
    C.save_corpus(records, path)
    with open(path, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(ParseError) as err:
        C.load_corpus(path)
    assert err.value.line == 3


def test_corpus_fitness_field_optional(tmp_path, lib):
    rec = C.build_finetune_corpus(lib, 1, rng_seed=4)[0]
    scored = C.CorpusRecord(arch=rec.arch, fitness=0.925, source=C.Source.NASBENCH)
    path = tmp_path / "corpus.jsonl"
    C.save_corpus([rec, scored], path)
    lines = [json.loads(l) for l in open(path)]
    assert "fitness" not in lines[0]
    assert lines[1]["fitness"] == 0.925
    back = C.load_corpus(path)
    assert back[0].fitness is None and back[1].fitness == 0.925


# --- benchmark ingestion -----------------------------------------------------------


def nb_record(adjacency, ops, acc):
    return {"adjacency": [v for row in adjacency for v in row],
            "ops": ops, "val_accuracy": acc}


def write_nb(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


LINEAR_CELL = nb_record(
    [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
    ["input", "conv3x3-bn-relu", "output"],
    0.95,
)


def test_nasbench_linear_cell_one_layer_each(tmp_path):
    path = tmp_path / "nb.jsonl"
    write_nb(path, [LINEAR_CELL])
    records = C.load_nasbench(path)
    assert len(records) == 1
    arch = records[0].arch
    # skeleton: stem + 3 stacks x 3 cells x 1 interior vertex + 2 downsamples
    assert len(arch.blocks) == 1 + 9 + 2
    assert records[0].fitness == 0.95
    assert records[0].source == C.Source.NASBENCH
    A.validate_architecture(arch, depth_bounds=None)


def test_nasbench_accuracy_filter(tmp_path):
    low = dict(LINEAR_CELL, val_accuracy=0.89)
    path = tmp_path / "nb.jsonl"
    write_nb(path, [LINEAR_CELL, low])
    records = C.load_nasbench(path)
    assert len(records) == 1
    assert records[0].fitness == 0.95


def test_nasbench_fixture_filter_count(tmp_path):
    rng = random.Random(123)
    rows = []
    for _ in range(50):
        acc = round(rng.uniform(0.80, 1.00), 4)
        rows.append(dict(LINEAR_CELL, val_accuracy=acc))
    path = tmp_path / "nb50.jsonl"
    write_nb(path, rows)
    expected = sum(1 for r in rows if r["val_accuracy"] >= 0.90)  # counting script
    records = C.load_nasbench(path)
    assert len(records) == expected
    assert 0 < expected < 50


def test_nasbench_topological_tie_break(tmp_path):
    # diamond: 0 -> {1, 2} -> 3; both middles depend only on input, so the
    # flattening must emit vertex 1 before vertex 2
    diamond = nb_record(
        [[0, 1, 1, 0], [0, 0, 0, 1], [0, 0, 0, 1], [0, 0, 0, 0]],
        ["input", "conv3x3-bn-relu", "conv1x1-bn-relu", "output"],
        0.97,
    )
    path = tmp_path / "nb.jsonl"
    write_nb(path, [diamond])
    arch = C.load_nasbench(path)[0].arch
    cell_kernels = [b.layers[0].kernel for b in arch.blocks
                    if b.layers[0].category is A.LayerCategory.CONV][1:]  # drop stem
    assert cell_kernels[:2] == [(3, 3), (1, 1)]


def test_nasbench_cycle_raises(tmp_path):
    cyclic = nb_record(
        [[0, 1, 0], [0, 0, 1], [0, 1, 0]],
        ["input", "conv3x3-bn-relu", "output"],
        0.95,
    )
    path = tmp_path / "nb.jsonl"
    write_nb(path, [cyclic])
    with pytest.raises(GraphError):
        C.load_nasbench(path)


def test_nasbench_malformed_line_number(tmp_path):
    path = tmp_path / "nb.jsonl"
    with open(path, "w") as fh:
        fh.write(json.dumps(LINEAR_CELL) + "\n")
        fh.write("garbage\n")
    with pytest.raises(ParseError) as err:
        C.load_nasbench(path)
    assert err.value.line == 2


def test_nasbench_unknown_op_rejected(tmp_path):
    bad = nb_record(
        [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
        ["input", "dense-5x5", "output"],
        0.95,
    )
    path = tmp_path / "nb.jsonl"
    write_nb(path, [bad])
    with pytest.raises(ParseError) as err:
        C.load_nasbench(path)
    assert err.value.line == 1


def test_nasbench_oversize_graph_rejected(tmp_path):
    n = 8  # schema allows at most 7 vertices
    adj = [[1 if j == i + 1 else 0 for j in range(n)] for i in range(n)]
    bad = nb_record(adj, ["input"] + ["conv3x3-bn-relu"] * 6 + ["output"], 0.95)
    path = tmp_path / "nb.jsonl"
    write_nb(path, [bad])
    with pytest.raises(ParseError):
        C.load_nasbench(path)


# --- vocabulary closure -------------------------------------------------------------


def test_closure_covers_reachable_space(lib):
    vocab = A.Vocabulary()
    C.extend_vocab_closure(vocab, lib, input_shape=(3, 32, 32), width_palette=(32,))
    vocab.freeze()
    rng = random.Random(77)
    for _ in range(50):
        arch = C.sample_architecture(rng, lib, width_palette=(32,))
        for layer in A.iter_block_layers(arch):
            vocab.encode_key(A.canonical_key(layer))  # raises if closure missed one


def test_closure_is_idempotent(lib):
    v1 = A.Vocabulary()
    C.extend_vocab_closure(v1, lib, input_shape=(3, 32, 32), width_palette=(32,))
    size_once = v1.size
    C.extend_vocab_closure(v1, lib, input_shape=(3, 32, 32), width_palette=(32,))
    assert v1.size == size_once
    assert 0 < size_once < 400
