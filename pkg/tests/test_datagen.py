"""Synthetic generators, anomaly injection, and CSV/manifest round trips."""
import json
import math

import numpy as np
import pytest

from ctxens.data import Context
from ctxens.datagen import (
    BUILTIN_DATASETS,
    ContextBlock,
    GeneratorSpec,
    assign_block_dims,
    builtin_dataset,
    generate_conditional,
    generate_global,
    inject_behavioral_swaps,
    load_csv,
    save_csv,
    save_manifest,
)
from ctxens.errors import (
    InfeasibleFractionError,
    InfeasibleSpecError,
    LabelDomainError,
    MissingColumnError,
    ParseError,
)

THREE_BLOCK_SPEC = GeneratorSpec(
    n_normal=100,
    blocks=(
        ContextBlock(5, 5, n_anomalies=5),
        ContextBlock(6, 4, n_anomalies=3),
        ContextBlock(7, 3, n_anomalies=2),
    ),
)


class TestSpecValidation:
    def test_blocks_must_cover_the_same_dimension(self):
        with pytest.raises(InfeasibleSpecError):
            GeneratorSpec(n_normal=10, blocks=(ContextBlock(2, 2), ContextBlock(2, 3)))

    def test_generating_block_needs_matching_component_counts(self):
        with pytest.raises(InfeasibleSpecError):
            GeneratorSpec(
                n_normal=10,
                blocks=(ContextBlock(2, 2, n_contextual_components=3,
                                     n_behavioral_components=5),),
            )

    def test_anomalies_need_a_second_component(self):
        with pytest.raises(InfeasibleSpecError):
            GeneratorSpec(
                n_normal=10,
                blocks=(ContextBlock(2, 2, n_anomalies=1,
                                     n_contextual_components=1,
                                     n_behavioral_components=1),),
            )

    def test_misc_rejections(self):
        with pytest.raises(InfeasibleSpecError):
            GeneratorSpec(n_normal=0, blocks=(ContextBlock(2, 2),))
        with pytest.raises(InfeasibleSpecError):
            GeneratorSpec(n_normal=5, blocks=())
        with pytest.raises(InfeasibleSpecError):
            GeneratorSpec(n_normal=5, blocks=(ContextBlock(2, 2),),
                          centroid_low=1.0, centroid_high=1.0)
        with pytest.raises(InfeasibleSpecError):
            ContextBlock(0, 2)
        with pytest.raises(InfeasibleSpecError):
            ContextBlock(2, 2, n_anomalies=-1)


class TestBlockDims:
    def test_three_block_layout(self):
        ctxs = assign_block_dims(THREE_BLOCK_SPEC)
        # block 0 takes the canonical split; later blocks mark the attributes
        # least used as behavioral so far (ties to the lowest index)
        assert ctxs[0].behavioral == (5, 6, 7, 8, 9)
        assert ctxs[1].behavioral == (0, 1, 2, 3)
        assert ctxs[2].behavioral == (0, 1, 4)
        assert ctxs[0].contextual == (0, 1, 2, 3, 4)
        assert ctxs[1].contextual == (4, 5, 6, 7, 8, 9)
        assert ctxs[2].contextual == (2, 3, 5, 6, 7, 8, 9)

    def test_every_block_is_a_full_bipartition(self):
        for ctx in assign_block_dims(THREE_BLOCK_SPEC):
            assert sorted(ctx.contextual + ctx.behavioral) == list(range(10))


class TestGenerateConditional:
    def test_row_layout_and_labels(self):
        ds, manifest = generate_conditional(THREE_BLOCK_SPEC, seed=0)
        assert ds.n == 110 and ds.d == 10
        assert ds.labels[:100].sum() == 0
        assert ds.labels[100:].sum() == 10
        assert ds.true_context == Context(tuple(range(5)), tuple(range(5, 10)))
        assert manifest["true_context_bitmask"] == 0b11111
        assert [b["n_anomalies"] for b in manifest["blocks"]] == [5, 3, 2]
        rows = [a["rows"] for a in manifest["anomalies"]]
        assert rows == [[100, 105], [105, 108], [108, 110]]

    def test_deterministic_per_seed(self):
        a, ma = generate_conditional(THREE_BLOCK_SPEC, seed=3)
        b, mb = generate_conditional(THREE_BLOCK_SPEC, seed=3)
        c, _ = generate_conditional(THREE_BLOCK_SPEC, seed=4)
        assert np.array_equal(a.features, b.features)
        assert ma == mb
        assert not np.array_equal(a.features, c.features)

    def test_coupling_is_a_bijection_and_respected(self):
        spec = GeneratorSpec(
            n_normal=600,
            blocks=(ContextBlock(3, 2, n_anomalies=30, n_contextual_components=3,
                                 n_behavioral_components=3),),
        )
        ds, m = generate_conditional(spec, seed=11)
        coupling = np.array(m["component_coupling"])
        assert sorted(coupling.tolist()) == [0, 1, 2]
        cent_u = np.array(m["centroids_contextual"])
        cent_v = np.array(m["centroids_behavioral"])
        comp = np.array(m["normal_component"])
        X = ds.features[: spec.n_normal]
        ctx_cols, beh_cols = (0, 1, 2), (3, 4)
        # normals: nearest contextual centroid is the drawn component, nearest
        # behavioral centroid is its coupled partner (up to Gaussian noise);
        # chance level for 3 components is 1/3
        d_u = ((X[:, ctx_cols, None] - cent_u.T[None]) ** 2).sum(axis=1)
        d_v = ((X[:, beh_cols, None] - cent_v.T[None]) ** 2).sum(axis=1)
        assert (d_u.argmin(axis=1) == comp).mean() > 0.55
        assert (d_v.argmin(axis=1) == coupling[comp]).mean() > 0.55
        n = np.arange(X.shape[0])
        assert d_u[n, comp].mean() < d_u.mean()
        assert d_v[n, coupling[comp]].mean() < d_v.mean()

    def test_anomalies_break_the_coupling(self):
        spec = GeneratorSpec(
            n_normal=400,
            blocks=(ContextBlock(3, 2, n_anomalies=40, n_contextual_components=3,
                                 n_behavioral_components=3),),
        )
        ds, m = generate_conditional(spec, seed=21)
        meta = m["anomalies"][0]
        base = np.array(meta["base_component"])
        wrong_v = np.array(meta["behavioral_component"])
        coupling = np.array(m["component_coupling"])
        # the redraw component must differ from the coupled one, row by row
        assert np.all(wrong_v != coupling[base])
        lo, hi = meta["rows"]
        A = ds.features[lo:hi]
        cent_v = np.array(m["centroids_behavioral"])
        d_v = ((A[:, (3, 4), None] - cent_v.T[None]) ** 2).sum(axis=1)
        assert (d_v.argmin(axis=1) == wrong_v).mean() > 0.55
        rows = np.arange(A.shape[0])
        assert d_v[rows, wrong_v].mean() < d_v[rows, coupling[base]].mean()

    def test_zero_anomalies_allowed(self):
        spec = GeneratorSpec(n_normal=50, blocks=(ContextBlock(2, 2),))
        ds, m = generate_conditional(spec, seed=0)
        assert ds.n == 50
        assert ds.labels.sum() == 0
        assert m["anomalies"] == []
        assert ds.anomaly_rate is None


class TestGenerateGlobal:
    def test_shape_counts_and_manifest(self):
        ds, m = generate_global(seed=1)
        assert ds.n == 5100 and ds.d == 10
        assert int(ds.labels.sum()) == 102  # round(5100 * 0.02)
        assert sum(m["cluster_sizes"]) == 4998
        assert len(m["centers"]) == 5
        # outliers live in the padded box, normals hug their centers
        out = ds.features[ds.labels == 1]
        assert out.min() >= -2.0 and out.max() <= 12.0

    def test_fraction_zero_gives_clean_data(self):
        ds, _ = generate_global(n=500, anomaly_fraction=0.0, seed=0)
        assert ds.labels.sum() == 0

    def test_infeasible_settings(self):
        with pytest.raises(InfeasibleFractionError):
            generate_global(anomaly_fraction=1.5)
        with pytest.raises(InfeasibleFractionError):
            generate_global(anomaly_fraction=-0.1)
        with pytest.raises(InfeasibleSpecError):
            generate_global(n=4, n_clusters=5, anomaly_fraction=0.0)
        with pytest.raises(InfeasibleSpecError):
            generate_global(n_clusters=0)


class TestBuiltins:
    SIZES = {
        "synthetic1": (25250, 250, 10),
        "synthetic1-small": (5050, 50, 10),
        "synthetic2": (5100, 100, 10),
        "synthetic2-heavy": (6000, 1000, 10),
        "synthetic3": (5100, 100, 50),
        "synthetic4": (5100, 102, 10),
    }

    @pytest.mark.parametrize("name", BUILTIN_DATASETS)
    def test_catalog_shapes(self, name):
        n, n_anom, d = self.SIZES[name]
        ds, manifest = builtin_dataset(name, seed=0)
        assert ds.n == n and ds.d == d
        assert int(ds.labels.sum()) == n_anom
        assert manifest["n_rows"] == n

    def test_unknown_name(self):
        with pytest.raises(InfeasibleSpecError):
            builtin_dataset("synthetic99")

    def test_three_block_anomaly_split(self):
        _, m = builtin_dataset("synthetic2", seed=0)
        assert [b["n_anomalies"] for b in m["blocks"]] == [50, 30, 20]
        assert [tuple(b["behavioral_dims"]) for b in m["blocks"]] == [
            (5, 6, 7, 8, 9),
            (0, 1, 2, 3),
            (0, 1, 4),
        ]


class TestInjection:
    def test_swaps_behavioral_attributes_from_recorded_donors(self, rng):
        base, _ = generate_global(n=300, anomaly_fraction=0.0, seed=5)
        ctx = Context((0, 1, 2, 3, 4), (5, 6, 7, 8, 9))
        out, m = inject_behavioral_swaps(base, ctx, fraction=0.05, seed=8)
        k = math.ceil(0.05 * 300)
        assert m["n_injected"] == k == int(out.labels.sum())
        targets = np.array(m["targets"])
        donors = np.array(m["donors"])
        assert np.array_equal(np.sort(np.flatnonzero(out.labels)), np.sort(targets))
        beh = list(ctx.behavioral)
        ctxl = list(ctx.contextual)
        assert np.array_equal(out.features[targets][:, ctxl], base.features[targets][:, ctxl])
        assert np.array_equal(out.features[targets][:, beh], base.features[donors][:, beh])
        # untouched rows are bit-identical
        rest = np.setdiff1d(np.arange(300), targets)
        assert np.array_equal(out.features[rest], base.features[rest])

    def test_donor_is_behaviorally_distant(self):
        base, _ = generate_global(n=200, anomaly_fraction=0.0, seed=2)
        ctx = Context(tuple(range(5)), tuple(range(5, 10)))
        _, m = inject_behavioral_swaps(base, ctx, fraction=0.03, seed=3)
        B = base.features[:, 5:]
        ZB = (B - B.mean(0)) / B.std(0)
        for t, d in zip(m["targets"], m["donors"]):
            d_donor = ((ZB[d] - ZB[t]) ** 2).sum()
            typical = np.median(((ZB - ZB[t]) ** 2).sum(axis=1))
            assert d_donor > typical  # far beyond the median row

    def test_fraction_bounds_and_bad_context(self):
        base, _ = generate_global(n=50, anomaly_fraction=0.0, seed=0)
        ctx = Context((0,), tuple(range(1, 10)))
        with pytest.raises(InfeasibleFractionError):
            inject_behavioral_swaps(base, ctx, fraction=1.2, seed=0)
        with pytest.raises(InfeasibleSpecError):
            inject_behavioral_swaps(base, Context((0,), (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)),
                                    fraction=0.1, seed=0)

    def test_fraction_zero_is_a_no_op_on_features(self):
        base, _ = generate_global(n=40, anomaly_fraction=0.0, seed=1)
        ctx = Context(tuple(range(5)), tuple(range(5, 10)))
        out, m = inject_behavioral_swaps(base, ctx, fraction=0.0, seed=0)
        assert m["n_injected"] == 0
        assert np.array_equal(out.features, base.features)
        assert out.labels.sum() == 0


class TestCsvIo:
    def test_labeled_round_trip(self, tmp_path, tiny_labeled_dataset):
        p = tmp_path / "data.csv"
        save_csv(tiny_labeled_dataset, p)
        back = load_csv(p)
        assert back.feature_names == tiny_labeled_dataset.feature_names
        assert np.array_equal(back.labels, tiny_labeled_dataset.labels)
        assert np.allclose(back.features, tiny_labeled_dataset.features, rtol=1e-9)

    def test_unlabeled_round_trip(self, tmp_path):
        ds, _ = generate_global(n=20, anomaly_fraction=0.0, seed=0)
        ds = type(ds)(features=ds.features, labels=None, feature_names=ds.feature_names,
                      true_context=None, anomaly_rate=None)
        p = tmp_path / "plain.csv"
        save_csv(ds, p)
        back = load_csv(p)
        assert back.labels is None
        assert np.allclose(back.features, ds.features, rtol=1e-9)

    def test_parse_error_reports_file_coordinates(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,label\n1.0,2.0,0\n3.0,oops,1\n")
        with pytest.raises(ParseError) as err:
            load_csv(p)
        assert err.value.line == 3 and err.value.column == 2

    def test_ragged_row_rejected(self, tmp_path):
        p = tmp_path / "ragged.csv"
        p.write_text("a,b\n1.0,2.0\n3.0\n")
        with pytest.raises(ParseError) as err:
            load_csv(p)
        assert err.value.line == 3

    def test_label_domain_enforced(self, tmp_path):
        p = tmp_path / "lab.csv"
        p.write_text("a,label\n1.0,2\n")
        with pytest.raises(LabelDomainError):
            load_csv(p)

    def test_explicit_label_column_is_mandatory(self, tmp_path):
        p = tmp_path / "nolab.csv"
        p.write_text("a,b\n1.0,2.0\n")
        assert load_csv(p).labels is None  # tolerant default
        with pytest.raises(MissingColumnError):
            load_csv(p, label_column="verdict")

    def test_empty_and_header_only_files(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(ParseError) as err:
            load_csv(empty)
        assert err.value.line == 1
        header_only = tmp_path / "h.csv"
        header_only.write_text("a,b\n")
        with pytest.raises(ParseError) as err2:
            load_csv(header_only)
        assert err2.value.line == 2

    def test_manifest_round_trip(self, tmp_path):
        _, m = generate_global(n=100, anomaly_fraction=0.05, seed=0)
        p = tmp_path / "m.json"
        save_manifest(m, p)
        assert json.loads(p.read_text()) == m
