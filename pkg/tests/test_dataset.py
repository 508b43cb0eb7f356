from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wallbench.dataset import (
    Dataset,
    SurfaceGeometry,
    WallField,
    assemble_global,
    assemble_pointwise,
    fit_scaler,
    inner_split,
    load_dataset,
    load_submission,
    save_dataset,
    save_submission,
    split_dataset,
)
from wallbench.errors import SubmissionError, ValidationError
from wallbench.flow import FlowCondition, generate_doe
from wallbench.oracle import OracleConfig, generate_dataset

FORCED = (0.30, 0.82, 0.96)


def tiny_dataset(n_p=5, n_cond=3, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    n = rng.standard_normal((n_p, 3))
    geo = SurfaceGeometry(rng.standard_normal((n_p, 3)), n / np.linalg.norm(n, axis=1, keepdims=True))
    conds = [FlowCondition(f"c{k}", 0.3 + 0.1 * k, float(k), 1e5) for k in range(n_cond)]
    fields = {c.id: WallField(c.id, rng.standard_normal((n_p, 4))) for c in conds}
    return Dataset(geo, conds, fields)


class TestSplit:
    def test_counts(self):
        conds = generate_doe()
        split = split_dataset(conds, 0)
        assert Counter(split.values()) == {"train": 312, "test": 156}
        groups = Counter()
        for c in conds:
            groups[(c.mach, c.p_i, split[c.id])] += 1
        for (m, p, lab), n in groups.items():
            assert n == (8 if lab == "train" else 4)

    def test_forced_extremes_many_seeds(self):
        conds = generate_doe()
        extremes = set()
        for m in FORCED:
            for p in (1e5, 2e5, 4e5):
                group = sorted((c for c in conds if c.mach == m and c.p_i == p), key=lambda c: c.aoa_deg)
                extremes |= {group[0].id, group[-1].id}
        assert len(extremes) == 18
        for seed in range(100):
            split = split_dataset(conds, seed)
            assert all(split[i] == "train" for i in extremes)

    def test_m030_endpoints(self):
        split = split_dataset(generate_doe(), 3)
        for c in generate_doe():
            if c.mach == 0.30 and abs(c.aoa_deg) == 15.0:
                assert split[c.id] == "train"

    def test_deterministic_and_seeded(self):
        conds = generate_doe()
        assert split_dataset(conds, 5) == split_dataset(conds, 5)
        assert split_dataset(conds, 5) != split_dataset(conds, 6)

    def test_incomplete_group(self):
        conds = generate_doe()[1:]
        with pytest.raises(ValidationError, match="incomplete group"):
            split_dataset(conds, 0)


class TestInnerSplit:
    def test_sizes(self):
        ids = [f"x{i}" for i in range(312)]
        a, b = inner_split(ids, 0.75, 0)
        assert (len(a), len(b)) == (234, 78)
        a, b = inner_split(["a", "b", "c", "d"], 0.5, 0)
        assert (len(a), len(b)) == (2, 2)

    def test_too_small(self):
        with pytest.raises(ValueError):
            inner_split(["a"], 0.75, 0)

    @given(st.integers(2, 400), st.floats(0.05, 0.95), st.integers(0, 2**32))
    def test_partition(self, n, frac, seed):
        ids = [f"i{k}" for k in range(n)]
        a, b = inner_split(ids, frac, seed)
        assert sorted(a + b) == sorted(ids)
        assert not set(a) & set(b)
        assert len(a) == min(max(int(np.floor(frac * n + 0.5)), 1), n - 1)
        assert (a, b) == inner_split(ids, frac, seed)


class TestTensors:
    def test_pointwise_layout(self):
        ds = tiny_dataset(n_p=5, n_cond=3)
        X, Y = assemble_pointwise(ds, ["c0", "c2"])
        assert X.shape == (10, 9) and Y.shape == (10, 4)
        np.testing.assert_array_equal(X[:5, 6:], np.tile(ds.by_id["c0"].params, (5, 1)))
        np.testing.assert_array_equal(X[5:, 6:], np.tile(ds.by_id["c2"].params, (5, 1)))
        np.testing.assert_array_equal(X[:5, :3], ds.geometry.coords)
        np.testing.assert_array_equal(X[5:, 3:6], ds.geometry.normals)
        np.testing.assert_array_equal(Y[5:], ds.fields["c2"].values)

    def test_global_layout(self):
        ds = tiny_dataset(n_p=5, n_cond=3)
        Xg, Yg = assemble_global(ds, ["c0", "c1", "c2"])
        assert Xg.shape == (3, 3) and Yg.shape == (3, 5, 4)
        np.testing.assert_array_equal(Xg[1], ds.by_id["c1"].params)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 5), st.integers(0, 1000))
    def test_global_matches_pointwise(self, n_p, n_cond, seed):
        ds = tiny_dataset(n_p, n_cond, seed)
        ids = [c.id for c in ds.conditions][::-1]
        X, Y = assemble_pointwise(ds, ids)
        Xg, Yg = assemble_global(ds, ids)
        np.testing.assert_array_equal(Yg.reshape(-1, 4), Y)
        np.testing.assert_array_equal(X[::n_p, 6:], Xg)

    def test_missing_field(self):
        ds = tiny_dataset()
        del ds.fields["c1"]
        with pytest.raises(ValidationError, match="c1"):
            assemble_pointwise(ds, ["c0", "c1"])


class TestScaler:
    def test_hand_case(self):
        s = fit_scaler(np.array([[1.0], [2.0], [3.0]]))
        np.testing.assert_allclose(s.apply([[1.0], [2.0], [3.0]]).ravel(), [-1.2247, 0.0, 1.2247], atol=1e-4)

    def test_constant_column(self):
        X = np.array([[1.0, 5.0], [2.0, 5.0], [4.0, 5.0]])
        s = fit_scaler(X)
        assert s.stds[1] == 1.0
        np.testing.assert_array_equal(s.apply(X)[:, 1], 0.0)

    @given(st.integers(2, 50), st.integers(1, 6), st.integers(0, 10**6))
    def test_moments_and_roundtrip(self, n, d, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        X = rng.standard_normal((n, d)) * rng.uniform(0.1, 100, d) + rng.uniform(-1e3, 1e3, d)
        s = fit_scaler(X)
        Z = s.apply(X)
        assert np.all(np.abs(Z.mean(axis=0)) <= 1e-10)
        assert np.all(np.abs(Z.std(axis=0) - 1.0) <= 1e-10)
        np.testing.assert_allclose(s.invert(Z), X, rtol=1e-12, atol=1e-12 * np.abs(X).max())


class TestValidation:
    def test_geometry_normals(self):
        with pytest.raises(ValidationError):
            SurfaceGeometry(np.zeros((2, 3)), np.ones((2, 3)))

    def test_nonfinite_field(self):
        with pytest.raises(ValidationError):
            WallField("a", np.array([[np.nan, 0, 0, 0]]))

    def test_bad_split_label(self):
        ds = tiny_dataset()
        with pytest.raises(ValidationError):
            Dataset(ds.geometry, ds.conditions, ds.fields, {"c0": "train", "c1": "test", "c2": "dev"})


class TestFiles:
    def test_roundtrip_bitwise(self, tmp_path, small_ds):
        save_dataset(small_ds, tmp_path / "d")
        back = load_dataset(tmp_path / "d")
        assert back.split == small_ds.split
        assert [(c.id, c.mach, c.aoa_deg, c.p_i) for c in back.conditions] == \
               [(c.id, c.mach, c.aoa_deg, c.p_i) for c in small_ds.conditions]
        np.testing.assert_array_equal(back.geometry.coords, small_ds.geometry.coords)
        for cid, f in small_ds.fields.items():
            assert back.fields[cid].values.tobytes() == f.values.tobytes()

    def test_format_text(self, tmp_path):
        ds = tiny_dataset()
        save_dataset(ds, tmp_path / "d")
        text = (tmp_path / "d" / "fields" / "c0.csv").read_bytes()
        assert b"\r" not in text
        assert text.startswith(b"point_id,cp,cfx,cfy,cfz\n0,")
        assert (tmp_path / "d" / "geometry.csv").read_text().startswith("point_id,x,y,z,nx,ny,nz\n")
        assert (tmp_path / "d" / "conditions.csv").read_text().startswith("id,mach,aoa_deg,p_i,split\n")

    def test_challenge_mode_hides_test_truth(self, tmp_path, small_ds):
        save_dataset(small_ds, tmp_path / "d", include_test_fields=False)
        back = load_dataset(tmp_path / "d")
        assert set(back.fields) == set(small_ds.train_ids)

    def test_submission_roundtrip(self, tmp_path, small_ds):
        ids = small_ds.test_ids
        save_submission({i: small_ds.fields[i] for i in ids}, tmp_path / "s")
        sub = load_submission(tmp_path / "s", ids, small_ds.geometry.n_p)
        for i in ids:
            assert sub[i].values.tobytes() == small_ds.fields[i].values.tobytes()

    def test_submission_missing_id(self, tmp_path, small_ds):
        ids = small_ds.test_ids
        save_submission({i: small_ds.fields[i] for i in ids[1:]}, tmp_path / "s")
        with pytest.raises(SubmissionError, match=ids[0]):
            load_submission(tmp_path / "s", ids)

    def test_submission_extra_id(self, tmp_path, small_ds):
        ids = small_ds.test_ids
        sub = {i: small_ds.fields[i] for i in ids}
        sub[small_ds.train_ids[0]] = small_ds.fields[small_ds.train_ids[0]]
        save_submission(sub, tmp_path / "s")
        with pytest.raises(SubmissionError, match="unexpected"):
            load_submission(tmp_path / "s", ids)

    def test_submission_nan(self, tmp_path, small_ds):
        ids = small_ds.test_ids
        save_submission({i: small_ds.fields[i] for i in ids}, tmp_path / "s")
        path = tmp_path / "s" / "fields" / f"{ids[3]}.csv"
        lines = path.read_text().split("\n")
        lines[2] = "1,nan,0,0,0"
        path.write_text("\n".join(lines))
        with pytest.raises(SubmissionError):
            load_submission(tmp_path / "s", ids)

    def test_submission_row_count(self, tmp_path, small_ds):
        ids = small_ds.test_ids
        save_submission({i: small_ds.fields[i].values[:-1] for i in ids},
                        tmp_path / "s")
        with pytest.raises(SubmissionError, match="rows"):
            load_submission(tmp_path / "s", ids, small_ds.geometry.n_p)

    def test_bad_header(self, tmp_path):
        ds = tiny_dataset()
        save_dataset(ds, tmp_path / "d")
        p = tmp_path / "d" / "geometry.csv"
        p.write_text(p.read_text().replace("point_id,x", "pid,x"))
        with pytest.raises(ValidationError, match="header"):
            load_dataset(tmp_path / "d")

    def test_regenerate_bit_identical(self, tmp_path):
        cfg = OracleConfig(n_p=50)
        save_dataset(generate_dataset(cfg=cfg, seed=4), tmp_path / "a")
        save_dataset(generate_dataset(cfg=cfg, seed=4), tmp_path / "b")
        for f in sorted((tmp_path / "a").rglob("*.csv")):
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()
