import json
import struct

import pytest

from rainbowloc.dataset import (
    DatasetError,
    generate_dataset,
    load_dataset,
    split_boundaries,
)


def test_regeneration_is_byte_identical(tiny_config, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_dataset("los", 20, tiny_config, master_seed=5, out_dir=a)
    generate_dataset("los", 20, tiny_config, master_seed=5, out_dir=b)
    assert (a / "records.bin").read_bytes() == (b / "records.bin").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


def test_different_seed_differs(tiny_config, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_dataset("los", 8, tiny_config, master_seed=5, out_dir=a)
    generate_dataset("los", 8, tiny_config, master_seed=6, out_dir=b)
    assert (a / "records.bin").read_bytes() != (b / "records.bin").read_bytes()


def test_split_rule():
    assert split_boundaries(10) == (8, 9)
    assert split_boundaries(100) == (80, 90)
    assert split_boundaries(5000) == (4000, 4500)


def test_roundtrip_and_splits(tiny_dataset):
    ds = tiny_dataset
    assert len(ds.records) == 50
    splits = ds.splits()
    assert len(splits["train"]) == 40
    assert len(splits["val"]) == 5
    assert len(splits["test"]) == 5
    ids = sorted(r.sample_id for s in splits.values() for r in s)
    assert ids == list(range(50))
    for rec in ds.records:
        assert rec.paths, "los scene always has at least the direct path"
        assert rec.position[2] == 25.0


def test_load_rejects_truncation(tiny_config, tmp_path):
    out = tmp_path / "d"
    generate_dataset("los", 12, tiny_config, master_seed=1, out_dir=out)
    payload = (out / "records.bin").read_bytes()
    (out / "records.bin").write_bytes(payload[:-20])
    manifest = json.loads((out / "manifest.json").read_text())
    import hashlib

    manifest["records_sha256"] = hashlib.sha256(payload[:-20]).hexdigest()
    (out / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DatasetError, match="record 11"):
        load_dataset(out)


def test_load_rejects_checksum_mismatch(tiny_config, tmp_path):
    out = tmp_path / "d"
    generate_dataset("los", 6, tiny_config, master_seed=1, out_dir=out)
    payload = bytearray((out / "records.bin").read_bytes())
    payload[-1] ^= 0xFF
    (out / "records.bin").write_bytes(bytes(payload))
    with pytest.raises(DatasetError, match="checksum"):
        load_dataset(out)


def test_load_rejects_version_mismatch(tiny_config, tmp_path):
    out = tmp_path / "d"
    generate_dataset("los", 6, tiny_config, master_seed=1, out_dir=out)
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["format_version"] = 99
    (out / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DatasetError, match="version"):
        load_dataset(out)


def test_load_rejects_corrupt_gain(tiny_config, tmp_path):
    out = tmp_path / "d"
    generate_dataset("los", 6, tiny_config, master_seed=1, out_dir=out)
    payload = bytearray((out / "records.bin").read_bytes())
    # first record: header magic(4) + version(4), record head is 8+8+24+4,
    # then path records; gain_re sits at offset 1+4+4+8+8+8 within the path
    rec_head = 8 + 8 + 24 + 4
    gain_off = 8 + rec_head + (1 + 4 + 4 + 8 + 8 + 8)
    struct.pack_into("<d", payload, gain_off, 1.0)  # far above free-space bound
    (out / "records.bin").write_bytes(bytes(payload))
    manifest = json.loads((out / "manifest.json").read_text())
    import hashlib

    manifest["records_sha256"] = hashlib.sha256(bytes(payload)).hexdigest()
    (out / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DatasetError, match="record 0"):
        load_dataset(out)


def test_records_validate_against_path_solver(tiny_dataset):
    # stored records must reproduce solve_paths exactly
    from rainbowloc.geometry import build_scene, sample_position
    from rainbowloc.paths import solve_paths

    ds = tiny_dataset
    scene = build_scene("los", ds.config.facet_deg)
    seed = ds.manifest["master_seed"]
    for rec in ds.records[:5]:
        pos = sample_position(seed, rec.sample_id, ds.config.region())
        assert (pos.x, pos.y, pos.z) == rec.position
        ps = solve_paths(scene, pos, f0_hz=ds.config.f0_hz)
        assert len(ps.paths) == len(rec.paths)
        for p, pr in zip(ps.paths, rec.paths):
            assert p.delay_s == pr.delay_s
            assert complex(p.gain) == pr.gain
            assert p.reflector_chain == pr.chain
