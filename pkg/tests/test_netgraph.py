import numpy as np
import pytest

from mixtconv import netgraph
from mixtconv.errors import InvalidPartition, InvalidShape
from mixtconv.netgraph import build_mstnet, build_network, build_tsn, sample_segments
from mixtconv.temporal import MixTConvConfig


@pytest.fixture(scope="module")
def toy():
    tsn = build_tsn(2, 5, resolution=32, width_scale=1 / 8)
    mst = build_mstnet(2, 5, "ks=1,3,5,7", resolution=32, width_scale=1 / 8)
    return tsn, mst


class TestStructure:
    def test_resnet50_layout(self):
        net = build_tsn(8, 174)
        assert len(net.blocks) == 16
        assert net.stage_widths() == [256, 512, 1024, 2048]
        assert net.feature_width == 2048
        assert [b.stride for b in net.blocks if b.stride != 1] == [2, 2, 2]
        assert sum(b.has_downsample for b in net.blocks) == 4

    def test_tsn_has_no_temporal_ops(self):
        assert build_tsn(8, 174).temporal_kinds() == {"none"}

    def test_mstnet_every_block(self):
        net = build_mstnet(8, 174)
        assert net.temporal_kinds() == {"mixtconv"}
        assert all(b.temporal.mix.kernel_sizes == (1, 3, 5, 7) for b in net.blocks)

    def test_head_and_inner_channels(self):
        head = build_mstnet(8, 174, position="head")
        inner = build_mstnet(8, 174, position="inner")
        assert [b.temporal_channels for b in head.blocks[:4]] == [64, 256, 256, 256]
        assert [b.temporal_channels for b in inner.blocks[:4]] == [64, 64, 64, 128]

    def test_jester_classes(self):
        shapes = netgraph.weight_shapes(build_mstnet(8, 27))
        assert shapes["fc.weight"] == (27, 2048) and shapes["fc.bias"] == (27,)

    def test_edge_sizes(self):
        assert build_tsn(1, 1).classes == 1
        assert build_mstnet(1, 27).frames == 1

    def test_invalid_sizes(self):
        with pytest.raises(InvalidShape):
            build_tsn(0, 10)
        with pytest.raises(InvalidShape):
            build_tsn(8, 0)

    def test_partition_failure_reported(self):
        with pytest.raises(InvalidPartition):
            build_mstnet(2, 5, "ks=1,3,5,7", position="inner", width_scale=1 / 64)

    def test_shift_and_ordinary_variants(self):
        assert build_network("mstnet", temporal_kind="shift").temporal_kinds() == {"shift"}
        net = build_network("mstnet", temporal_kind="ordinary1d", position="inner")
        assert netgraph.temporal_weight_shape(net.blocks[0]) == (64, 64, 3)

    def test_tsn_rejects_temporal(self):
        with pytest.raises(ValueError):
            build_network("tsn", temporal_kind="shift")

    def test_weight_shapes_cover_plan(self):
        net = build_mstnet(8, 174)
        shapes = netgraph.weight_shapes(net)
        assert shapes["stem.conv.weight"] == (64, 3, 7, 7)
        assert shapes["layer1.0.temporal.weight"] == [(16, 1), (16, 3), (16, 5), (16, 7)]
        assert shapes["layer2.0.downsample.conv.weight"] == (512, 256, 1, 1)
        assert shapes["layer2.0.conv2.weight"] == (128, 128, 3, 3)
        assert shapes["fc.weight"] == (174, 2048)
        assert "layer1.1.downsample.conv.weight" not in shapes

    def test_final_spatial_size(self):
        plan = list(netgraph.layer_plan(build_tsn(8, 174)))
        assert plan[-2].kind == "avgpool" and plan[-2].hw == (7, 7)


class TestForward:
    def test_output_shape(self, toy, rng):
        _, mst = toy
        w = netgraph.init_weights(mst, seed=0)
        x = rng.standard_normal((3, 2, 3, 32, 32)).astype(np.float32)
        video, frames = netgraph.network_forward(mst, w, x, return_frame_scores=True)
        assert video.shape == (3, 5) and frames.shape == (3, 2, 5)
        np.testing.assert_allclose(video, frames.mean(axis=1), rtol=1e-6)
        assert np.all(np.isfinite(video))

    def test_identity_mstnet_equals_tsn(self, toy, rng):
        tsn, mst = toy
        w = netgraph.init_weights(mst, seed=3, temporal_init="identity")
        w2d = {k: v for k, v in w.items() if ".temporal." not in k}
        x = rng.standard_normal((2, 2, 3, 32, 32)).astype(np.float32)
        diff = np.abs(netgraph.network_forward(mst, w, x) - netgraph.network_forward(tsn, w2d, x))
        assert diff.max() <= 1e-5

    def test_inner_identity_equals_tsn(self, rng):
        tsn = build_tsn(2, 5, resolution=32, width_scale=1 / 8)
        mst = build_mstnet(2, 5, "ks=1,3", position="inner", resolution=32, width_scale=1 / 8)
        w = netgraph.init_weights(mst, seed=4)
        w2d = {k: v for k, v in w.items() if ".temporal." not in k}
        x = rng.standard_normal((1, 2, 3, 32, 32)).astype(np.float32)
        diff = np.abs(netgraph.network_forward(mst, w, x) - netgraph.network_forward(tsn, w2d, x))
        assert diff.max() <= 1e-5

    def test_tsn_frame_permutation(self, rng):
        tsn = build_tsn(4, 5, resolution=32, width_scale=1 / 8)
        w = netgraph.init_weights(tsn, seed=1)
        x = rng.standard_normal((1, 4, 3, 32, 32)).astype(np.float32)
        a = netgraph.network_forward(tsn, w, x)
        b = netgraph.network_forward(tsn, w, x[:, [2, 0, 3, 1]])
        assert np.abs(a - b).max() <= 1e-6

    def test_mstnet_sees_order(self, rng):
        mst = build_mstnet(4, 5, resolution=32, width_scale=1 / 8)
        w = netgraph.init_weights(mst, seed=1, temporal_init="uniform")
        x = rng.standard_normal((1, 4, 3, 32, 32)).astype(np.float32)
        a = netgraph.network_forward(mst, w, x)
        b = netgraph.network_forward(mst, w, x[:, ::-1])
        assert np.abs(a - b).max() > 1e-3

    def test_input_shape_checked(self, toy):
        tsn, _ = toy
        w = netgraph.init_weights(tsn)
        with pytest.raises(InvalidShape):
            netgraph.network_forward(tsn, w, np.zeros((1, 3, 3, 32, 32), np.float32))

    def test_weights_checked(self, toy):
        tsn, mst = toy
        with pytest.raises(InvalidShape):
            netgraph.network_forward(mst, netgraph.init_weights(tsn), np.zeros((1, 2, 3, 32, 32), np.float32))

    def test_init_is_seeded(self, toy):
        _, mst = toy
        a, b = netgraph.init_weights(mst, seed=9), netgraph.init_weights(mst, seed=9)
        assert all(np.array_equal(np.asarray(a[k]), np.asarray(b[k])) for k in a if not isinstance(a[k], list))


class TestConsensus:
    def test_mean(self):
        s = np.array([[[1.0, 0.0], [3.0, 2.0]]])
        np.testing.assert_array_equal(netgraph.consensus_average(s), [[2.0, 1.0]])

    def test_single_frame(self):
        s = np.array([[[0.25, 0.75]]])
        np.testing.assert_array_equal(netgraph.consensus_average(s), [[0.25, 0.75]])

    def test_bad_rank(self):
        with pytest.raises(InvalidShape):
            netgraph.consensus_average(np.zeros((2, 3)))


class TestSampling:
    def test_center_even(self):
        assert sample_segments(32, 8) == [1, 5, 9, 13, 17, 21, 25, 29]

    def test_center_uneven(self):
        assert sample_segments(16, 8) == [0, 2, 4, 6, 8, 10, 12, 14]

    def test_exact(self):
        assert sample_segments(8, 8) == list(range(8))

    def test_repeat_short_video(self):
        assert sample_segments(3, 8) == [0, 0, 0, 1, 1, 1, 2, 2]

    def test_random_seeded_in_segment(self):
        a = sample_segments(100, 8, "random", seed=4)
        assert a == sample_segments(100, 8, "random", seed=4)
        bounds = np.cumsum([0] + [13] * 4 + [12] * 4)
        assert all(bounds[i] <= a[i] < bounds[i + 1] for i in range(8))

    def test_invalid(self):
        with pytest.raises(ValueError):
            sample_segments(0, 8)
        with pytest.raises(ValueError):
            sample_segments(10, 8, "bogus")


class TestConfigAndBundles:
    def test_parse(self):
        cfg = netgraph.parse_config("# toy\nnet = mstnet\nframes=16\nmixtconv=ks=3,5\n")
        net = netgraph.network_from_config(cfg)
        assert net.frames == 16 and net.blocks[0].temporal.mix == MixTConvConfig((3, 5))

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            netgraph.parse_config("depth=101")

    def test_round_trip(self, toy, tmp_path, rng):
        _, mst = toy
        w = netgraph.init_weights(mst, seed=2, temporal_init="uniform")
        netgraph.save_weights(tmp_path / "w", w)
        loaded = netgraph.load_weights(tmp_path / "w", mst)
        x = rng.standard_normal((1, 2, 3, 32, 32)).astype(np.float32)
        np.testing.assert_array_equal(netgraph.network_forward(mst, w, x), netgraph.network_forward(mst, loaded, x))

    def test_missing_tensor(self, toy, tmp_path):
        tsn, _ = toy
        netgraph.save_weights(tmp_path, netgraph.init_weights(tsn))
        (tmp_path / "fc.bias.mxt").unlink()
        with pytest.raises(InvalidShape):
            netgraph.load_weights(tmp_path, tsn)

    def test_missing_dir(self, toy, tmp_path):
        with pytest.raises(FileNotFoundError):
            netgraph.load_weights(tmp_path / "nope", toy[0])
