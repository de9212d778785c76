"""End-to-end smoke test of the Python bindings on a few small adders."""

import os
import tempfile

import synthsight_py as ss


def main():
    lib = ss.CellLibrary()
    assert lib.fingerprint and lib.fingerprint != ss.CellLibrary(seed=1).fingerprint

    pre = ss.gen_dataset(width=8, train=6, val=2, test=2, seed=0, library=lib)
    assert len(pre) == 10 and pre[0].role == "pre" and pre[-1].split == "test"
    timing = pre[0].analyze(lib)
    assert timing["worst_delay"] > 0 and len(timing["arrival"]) == len(pre[0])

    post = ss.synthesize(pre, alpha=0.6, library=lib)
    labeled = ss.label(pre, post, library=lib)
    for g in labeled:
        delay, area = g.reconstruct()
        hdr = g.header()
        assert abs(delay - hdr["post_delay"]) <= 1e-6 * hdr["post_delay"]
        assert abs(area - hdr["post_area"]) <= 1e-6 * hdr["post_area"]

    norm = ss.fit_norm(labeled)
    model, report = ss.train(labeled, norm, epochs=2, hidden=16, heads=2, layers=2)
    assert len(report["epochs"]) == 2 and model.param_count > 0

    test = ss.select_split(labeled, "test")
    pred = model.predict(test)
    assert pred[0].role == "inferred"
    summary = ss.evaluate(pred, labeled)
    assert len(summary["designs"]) == 2
    exact = ss.evaluate(labeled, labeled)
    assert exact["delay_mae"] < 1e-6 and exact["baseline_delay_mae"] > 0

    base_delay, _ = labeled[0].baseline()
    curve = labeled[0].sweep([base_delay, 0.9 * base_delay, 0.8 * base_delay])
    areas = [p["area"] for p in curve]
    assert areas == sorted(areas), areas

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "labeled.jsonl")
        ss.write_dataset(path, labeled)
        back = ss.read_dataset(path)
        assert [g.to_json() for g in back] == [g.to_json() for g in labeled]
        model.save(os.path.join(d, "m.ckpt"))
        again = ss.Model.load(os.path.join(d, "m.ckpt"))
        assert [g.to_json() for g in again.predict(test)] == [g.to_json() for g in pred]

    try:
        ss.synthesize(pre, library=ss.CellLibrary(seed=1))
    except ss.SynthsightError as e:
        assert "fingerprint" in str(e)
    else:
        raise AssertionError("library mismatch not reported")

    print("delay MAE %.4f  area MAE %.4f" % (summary["delay_mae"], summary["area_mae"]))
    print("smoke test ok")


if __name__ == "__main__":
    main()
