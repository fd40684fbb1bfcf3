import math

import pytest

from mixtconv import cost, netgraph
from mixtconv.netgraph import build_mstnet, build_network, build_tsn
from mixtconv.temporal import partition_channels

G = 1e9


def gflops(net):
    return cost.cost_network(net).total_flops / G


def direct_temporal_params(kernel_sizes, position="head"):
    """Independent summation over the 16 blocks of ResNet-50."""
    stages = [(3, 64, 256), (4, 128, 512), (6, 256, 1024), (3, 512, 2048)]
    total, c_in = 0, 64
    for n, mid, out in stages:
        for _ in range(n):
            c = c_in if position == "head" else mid
            total += sum(cm * k for cm, k in zip(partition_channels(c, len(kernel_sizes)), kernel_sizes))
            c_in = out
    return total


class TestFrozenTotals:
    # totals frozen from an independent hand summation of the ResNet-50 plan
    def test_tsn(self):
        report = cost.cost_network(build_tsn(8, 174))
        assert report.total_flops == 32_699_940_864
        assert report.total_params == 23_864_558

    def test_mstnet_default(self):
        assert cost.cost_network(build_mstnet(8, 174)).total_flops == 32_879_771_648

    @pytest.mark.parametrize(
        "spec, expected",
        [("ks=3", 32.835), ("ks=5", 32.925), ("ks=7", 33.015), ("ks=1,3", 32.790), ("ks=3,3,3;dil=1,2,3", 32.835)],
    )
    def test_variants(self, spec, expected):
        assert gflops(build_mstnet(8, 174, spec)) == pytest.approx(expected, abs=5e-4)


class TestStructure:
    def test_additive(self):
        report = cost.cost_network(build_mstnet(8, 174))
        kinds = {r.kind for r in report.records}
        assert report.total_flops == sum(report.by_kind(k).total_flops for k in kinds)

    def test_temporal_delta_is_temporal_records(self):
        mst, tsn = build_mstnet(8, 174), build_tsn(8, 174)
        delta = cost.cost_network(mst).total_flops - cost.cost_network(tsn).total_flops
        assert delta == cost.cost_network(mst).by_kind("temporal").total_flops

    def test_ks1_costs_one_mac_per_element(self):
        net = build_mstnet(8, 174, "ks=1")
        rec = next(r for r in cost.cost_network(net).records if r.path == "layer1.0.temporal")
        assert rec.flops == 8 * 56 * 56 * 64 and rec.params == 64

    def test_dilation_free(self):
        a = gflops(build_mstnet(8, 174, "ks=3,3,3;dil=1,1,1"))
        assert a == gflops(build_mstnet(8, 174, "ks=3,3,3;dil=1,2,3"))

    def test_frames_scale_linearly(self):
        a = cost.cost_network(build_mstnet(8, 174)).total_flops
        assert cost.cost_network(build_mstnet(16, 174)).total_flops == 2 * a

    def test_params_independent_of_frames(self):
        a = cost.cost_network(build_mstnet(8, 174)).total_params
        assert cost.cost_network(build_mstnet(16, 174)).total_params == a

    def test_ordinary_over_depthwise_is_channels(self):
        ordn = build_network("mstnet", temporal_kind="ordinary1d", kernel_size=3)
        dw = build_mstnet(8, 174, "ks=3")
        for a, b, block in zip(
            cost.cost_network(ordn).by_kind("temporal").records,
            cost.cost_network(dw).by_kind("temporal").records,
            ordn.blocks,
        ):
            assert a.flops == block.temporal_channels * b.flops

    def test_shift_is_free(self):
        net = build_network("mstnet", temporal_kind="shift")
        assert cost.cost_network(net).total_flops == cost.cost_network(build_tsn(8, 174)).total_flops

    def test_temporal_params_match_direct_sum(self):
        report = cost.cost_network(build_mstnet(8, 174))
        assert report.by_kind("temporal").total_params == direct_temporal_params((1, 3, 5, 7)) == 52_480

    def test_inner_params(self):
        report = cost.cost_network(build_mstnet(8, 174, position="inner"))
        assert report.by_kind("temporal").total_params == direct_temporal_params((1, 3, 5, 7), "inner")

    def test_conv_params_match_weight_shapes(self):
        net = build_mstnet(8, 174)
        shapes = netgraph.weight_shapes(net)
        conv = cost.cost_network(net).by_kind("conv")
        expected = sum(math.prod(shape) for key, shape in shapes.items() if ".conv" in key)
        assert conv.total_params == expected


class TestReport:
    def test_lines(self):
        lines = cost.cost_network(build_tsn(8, 174)).lines()
        assert lines[0].split("\t")[0] == "stem.conv"
        assert lines[-1] == "TOTAL\t32699940864\t23864558"
        assert all(len(line.split("\t")) == 3 for line in lines)

    def test_text_sections(self, tmp_path):
        report = cost.cost_network(build_network("mstnet", temporal_kind="ordinary1d"))
        path = tmp_path / "r.txt"
        report.write(path)
        text = path.read_text()
        for section in ("[conventions]", "[notes]", "[layers]", "[summary]"):
            assert section in text
        assert "total_flops=" in text and "mac=" in text
