"""Smoke test for the latentvid_py extension module.

Build and install first:

    cd crates/py && maturin build --release -o dist && pip install dist/*.whl
"""

import os
import tempfile

import latentvid_py as lv


def main():
    data = lv.Dataset.synthetic(identities=2, motions=2, holdout=[(1, 1)], frames=6, seed=0)
    assert len(data) == 3
    assert data.held_out() == [("P2", "A2")]
    clips = data.clips()
    assert clips[0].shape == (6, 3, 16, 16)

    ckpt = lv.train(
        data,
        epochs=3,
        warmup=1,
        scheme="static=per-class,transient=per-class",
        static_dim=4,
        transient_dim=3,
        base_channels=4,
        hidden=8,
        seed=1,
    )
    assert ckpt.epoch == 4
    assert len(ckpt.loss_history()) == 4

    video = ckpt.generate("P2", "A2")
    assert video.shape == clips[0].shape
    assert all(0.0 <= v <= 1.0 for v in video.data())
    truth = data.render("P2", "A2")
    print("held-out ssim", round(lv.clip_ssim(video, truth), 4))

    frames = ckpt.interpolate("P1", "A1", 2, 5, 3)
    assert len(frames) == 3

    report = lv.evaluate(clips, clips)
    assert report["mcs"] == -12.0
    print("self-eval", report)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.ckpt")
        ckpt.save(path)
        again = lv.Checkpoint.load(path)
        assert again.static_names() == ckpt.static_names()
        navs = os.path.join(d, "clips.navs")
        lv.write_navs(clips, navs)
        assert [c.data() for c in lv.read_navs(navs)] == [c.data() for c in clips]

    try:
        ckpt.generate("P9", "A1")
    except KeyError:
        pass
    else:
        raise AssertionError("unknown entry accepted")

    print("ok")


if __name__ == "__main__":
    main()
