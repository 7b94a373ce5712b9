import json

import numpy as np
import pytest
import torch
from PIL import Image

from segextract.backbones import BackboneError, ToyViT, load_backbone
from segextract.cli import main
from segextract.extract import (extract_dense_features,
                                extract_proposal_features, extract_saliency,
                                read_engine_manifest)
from segextract.ftn1 import read_ftn1
from segextract.saliency import SaliencyError, load_saliency_model


def make_images(root, n=3, size=64):
    rng = np.random.default_rng(0)
    (root / "images").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        image_id = f"img{i}"
        arr = rng.integers(0, 255, (size, size, 3)).astype(np.uint8)
        arr[16:48, 16:48] = [220, 40, 40]  # a salient-ish block
        Image.fromarray(arr).save(root / "images" / f"{image_id}.png")
        entries.append({"image_id": image_id,
                        "image_path": f"images/{image_id}.png"})
    manifest = root / "m.jsonl"
    manifest.write_text("\n".join(json.dumps(e) for e in entries) + "\n")
    return manifest


class TestSaliency:
    def test_one_image_one_map_same_dims(self, tmp_path):
        manifest = make_images(tmp_path, n=1)
        entries = read_engine_manifest(manifest)
        report = extract_saliency(entries, load_saliency_model("contrast"),
                                  tmp_path / "sal")
        assert list(report.outputs) == ["img0"] and not report.failures
        with Image.open(report.outputs["img0"]) as img:
            assert img.mode == "L" and img.size == (64, 64)

    def test_batch_preserves_ids(self, tmp_path):
        manifest = make_images(tmp_path, n=5)
        entries = read_engine_manifest(manifest)
        report = extract_saliency(entries, load_saliency_model("contrast"),
                                  tmp_path / "sal")
        assert sorted(report.outputs) == [f"img{i}" for i in range(5)]

    def test_missing_checkpoint_hint(self, tmp_path):
        with pytest.raises(SaliencyError, match="torch.jit.trace"):
            load_saliency_model("torchscript", str(tmp_path / "absent.pt"))

    def test_torchscript_saliency_runs(self, tmp_path):
        class Blur(torch.nn.Module):
            def forward(self, x):
                return x.mean(dim=1, keepdim=True)

        ckpt = tmp_path / "sal.pt"
        torch.jit.script(Blur()).save(str(ckpt))
        model = load_saliency_model("torchscript", str(ckpt))
        out = model(np.zeros((16, 16, 3), dtype=np.uint8))
        assert out.shape == (16, 16) and out.dtype == np.uint8


class TestProposalFeatures:
    def specs_for(self, entries):
        return {e["image_id"]: {"bbox": [16, 16, 47, 47], "target_w": 32,
                                "target_h": 32, "resampling": "bilinear"}
                for e in entries}

    def test_shape_contract_and_combined(self, tmp_path):
        manifest = make_images(tmp_path, n=4)
        entries = read_engine_manifest(manifest)
        backbone = load_backbone("toy", patch_size=8, dim=24)
        report = extract_proposal_features(
            entries, self.specs_for(entries), backbone, tmp_path / "feat",
            combined_path=tmp_path / "all.ftn")
        assert not report.failures
        assert report.feature_dim == 24
        combined = read_ftn1(tmp_path / "all.ftn")
        assert combined.shape == (4, 24)
        for i, entry in enumerate(entries):
            row = read_ftn1(report.outputs[entry["image_id"]])
            assert row.shape == (24,)
            assert np.array_equal(row, combined[i])
            assert np.isfinite(row).all()

    def test_identical_crops_identical_rows(self, tmp_path):
        manifest = make_images(tmp_path, n=1)
        entries = read_engine_manifest(manifest)
        backbone = load_backbone("toy")
        spec = self.specs_for(entries)
        a = extract_proposal_features(entries, spec, backbone, tmp_path / "f1")
        b = extract_proposal_features(entries, spec, backbone, tmp_path / "f2")
        assert np.array_equal(read_ftn1(a.outputs["img0"]),
                              read_ftn1(b.outputs["img0"]))

    def test_missing_spec_collected_not_fatal(self, tmp_path):
        manifest = make_images(tmp_path, n=2)
        entries = read_engine_manifest(manifest)
        specs = self.specs_for(entries[:1])
        report = extract_proposal_features(entries, specs,
                                           load_backbone("toy"),
                                           tmp_path / "feat")
        assert "img0" in report.outputs
        assert "img1" in report.failures

    def test_bbox_outside_image_collected(self, tmp_path):
        manifest = make_images(tmp_path, n=1)
        entries = read_engine_manifest(manifest)
        specs = {"img0": {"bbox": [0, 0, 200, 200], "target_w": 32,
                          "target_h": 32}}
        report = extract_proposal_features(entries, specs,
                                           load_backbone("toy"),
                                           tmp_path / "feat")
        assert "img0" in report.failures


class TestDenseFeatures:
    def test_patch_grid_arithmetic(self, tmp_path):
        manifest = make_images(tmp_path, n=1, size=100)
        entries = read_engine_manifest(manifest)
        backbone = load_backbone("toy", patch_size=8, dim=16)
        report = extract_dense_features(entries, backbone, tmp_path / "dense",
                                        input_size=256)
        fmap = read_ftn1(report.outputs["img0"])
        assert fmap.shape == (32, 32, 16)

    def test_two_runs_identical(self, tmp_path):
        manifest = make_images(tmp_path, n=2)
        entries = read_engine_manifest(manifest)
        backbone = load_backbone("toy")
        a = extract_dense_features(entries, backbone, tmp_path / "d1", 64)
        b = extract_dense_features(entries, backbone, tmp_path / "d2", 64)
        for image_id in a.outputs:
            assert np.array_equal(read_ftn1(a.outputs[image_id]),
                                  read_ftn1(b.outputs[image_id]))

    def test_corrupt_image_error_run_continues(self, tmp_path):
        manifest = make_images(tmp_path, n=3)
        (tmp_path / "images" / "img1.png").write_bytes(b"not a png")
        entries = read_engine_manifest(manifest)
        report = extract_dense_features(entries, load_backbone("toy"),
                                        tmp_path / "dense", 64)
        assert set(report.outputs) == {"img0", "img2"}
        assert "img1" in report.failures


class TestBackbones:
    def test_token_layout(self):
        backbone = load_backbone("toy", patch_size=8, dim=32)
        images = np.zeros((2, 32, 32, 3), dtype=np.uint8)
        tokens = backbone.tokens(images)
        assert tokens.shape == (2, 1 + 16, 32)
        assert backbone.dim == 32

    def test_torchscript_backbone_roundtrip(self, tmp_path):
        class PatchTokens(torch.nn.Module):
            def __init__(self):
                super().__init__()
                self.proj = torch.nn.Conv2d(3, 12, kernel_size=8, stride=8)

            def forward(self, x):
                patches = self.proj(x).flatten(2).transpose(1, 2)
                cls = patches.mean(dim=1, keepdim=True)
                return torch.cat([cls, patches], dim=1)

        ckpt = tmp_path / "backbone.pt"
        torch.jit.script(PatchTokens()).save(str(ckpt))
        backbone = load_backbone("torchscript", str(ckpt), patch_size=8)
        dense = backbone.dense_features(np.zeros((1, 64, 64, 3), dtype=np.uint8))
        assert dense.shape == (1, 8, 8, 12)

    def test_missing_checkpoint_hint(self, tmp_path):
        with pytest.raises(BackboneError, match="torch.jit"):
            load_backbone("torchscript", str(tmp_path / "absent.pt"))

    def test_unknown_backbone(self):
        with pytest.raises(BackboneError, match="unknown"):
            load_backbone("resnet-from-nowhere")

    def test_toy_seed_controls_weights(self):
        a = ToyViT(seed=0)
        b = ToyViT(seed=0)
        c = ToyViT(seed=1)
        pa = torch.cat([p.flatten() for p in a.parameters()])
        pb = torch.cat([p.flatten() for p in b.parameters()])
        pc = torch.cat([p.flatten() for p in c.parameters()])
        assert torch.equal(pa, pb)
        assert not torch.equal(pa, pc)


class TestCli:
    def test_full_flow_on_manifest(self, tmp_path, capsys):
        manifest = make_images(tmp_path, n=3)
        assert main(["saliency", "--manifest", str(manifest),
                     "--out-dir", str(tmp_path / "sal")]) == 0
        specs = {f"img{i}": {"bbox": [0, 0, 63, 63], "target_w": 32,
                             "target_h": 32} for i in range(3)}
        (tmp_path / "crops.json").write_text(json.dumps(specs))
        assert main(["features", "--manifest", str(manifest),
                     "--crop-specs", str(tmp_path / "crops.json"),
                     "--out-dir", str(tmp_path / "feat"),
                     "--combined", str(tmp_path / "all.ftn")]) == 0
        assert main(["dense", "--manifest", str(manifest),
                     "--out-dir", str(tmp_path / "dense"),
                     "--input-size", "64"]) == 0
        for sub, ext in (("sal", "png"), ("feat", "ftn"), ("dense", "ftn")):
            files = sorted((tmp_path / sub).glob(f"*.{ext}"))
            assert len(files) == 3
            extractor_manifest = json.loads(
                (tmp_path / sub / "extractor_manifest.json").read_text())
            assert len(extractor_manifest["outputs"]) == 3
            assert not extractor_manifest["failures"]

    def test_cli_missing_checkpoint_is_input_error(self, tmp_path, capsys):
        manifest = make_images(tmp_path, n=1)
        code = main(["saliency", "--manifest", str(manifest),
                     "--out-dir", str(tmp_path / "sal"),
                     "--model", "torchscript",
                     "--checkpoint", str(tmp_path / "absent.pt")])
        assert code == 2
        assert "not found" in capsys.readouterr().err
