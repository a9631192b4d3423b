import pytest

from cellcount.archspec import (
    ACTIVATION,
    ADD,
    ArchConfig,
    ArchGraph,
    BATCHNORM,
    CONV,
    INPUT,
    LayerNode,
    MAXPOOL,
    UPSAMPLE,
    build_resunet,
    param_count,
    receptive_field,
    shape_inference,
    summarize,
    summary_json_dict,
)
from oracles import receptive_field_oracle


def chain_graph(*layers) -> ArchGraph:
    """Small sequential graph for focused param/receptive-field cases.

    Each layer is (kind, kernel, stride) or (kind, kernel, stride, in_c, out_c).
    """
    nodes = [LayerNode(id=0, kind=INPUT, inputs=(), in_channels=1, out_channels=1, name="input")]
    prev = 0
    for layer in layers:
        kind, kernel, stride = layer[:3]
        in_c, out_c = layer[3:] if len(layer) == 5 else (1, 1)
        node = LayerNode(id=len(nodes), kind=kind, inputs=(prev,), kernel=kernel,
                         stride=stride, in_channels=in_c, out_channels=out_c,
                         name=f"{kind}{len(nodes)}")
        nodes.append(node)
        prev = node.id
    return ArchGraph(nodes=nodes, output_id=prev, config=ArchConfig(depth=1))


class TestBuildStructure:
    def test_colorspace_conv_first(self):
        g = build_resunet(ArchConfig())
        first = g.nodes[1]
        assert first.kind == CONV
        assert first.kernel == 1
        assert (first.in_channels, first.out_channels) == (3, 1)

    def test_no_colorspace_flag(self):
        g = build_resunet(ArchConfig(colorspace_conv=False))
        assert g.nodes[1].kind == BATCHNORM  # straight into the first block

    def test_extra_bottleneck_flag(self):
        base = build_resunet(ArchConfig(extra_bottleneck_block=False))
        kernels = {n.kernel for n in base.nodes if n.kind == CONV}
        assert kernels == {1, 3}
        wide = build_resunet(ArchConfig(extra_bottleneck_block=True))
        assert any(n.kernel == 5 for n in wide.nodes if n.kind == CONV)
        n_bottleneck_adds = sum(1 for n in wide.nodes
                                if n.kind == ADD and n.name.startswith("bottleneck"))
        assert n_bottleneck_adds == 2
        assert sum(1 for n in base.nodes
                   if n.kind == ADD and n.name.startswith("bottleneck")) == 1

    def test_depth_one_has_single_pool_and_upsample(self):
        g = build_resunet(ArchConfig(depth=1))
        assert sum(1 for n in g.nodes if n.kind == MAXPOOL) == 1
        assert sum(1 for n in g.nodes if n.kind == UPSAMPLE) == 1

    def test_residual_block_shape(self):
        # two batchnorm-activation-conv sequences plus a shortcut per block
        g = build_resunet(ArchConfig(depth=2))
        adds = [n for n in g.nodes if n.kind == ADD]
        for add in adds:
            main = g.node(add.inputs[0])
            assert main.kind == CONV
            act = g.node(main.inputs[0])
            assert act.kind == ACTIVATION
            bn = g.node(act.inputs[0])
            assert bn.kind == BATCHNORM
            inner = g.node(bn.inputs[0])
            assert inner.kind == CONV

    def test_output_head(self):
        g = build_resunet(ArchConfig())
        out = g.node(g.output_id)
        assert out.kind == ACTIVATION and out.name == "sigmoid"
        head = g.node(out.inputs[0])
        assert head.kind == CONV and head.kernel == 1 and head.out_channels == 1

    def test_acyclic_topological_ids(self):
        g = build_resunet(ArchConfig())
        for node in g.nodes:
            assert all(src < node.id for src in node.inputs)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ArchConfig(depth=0)
        with pytest.raises(ValueError):
            ArchConfig(standard_kernel=4)
        with pytest.raises(ValueError):
            ArchConfig(base_filters=0)


class TestShapeInference:
    def test_512_input(self):
        g = build_resunet(ArchConfig())
        shapes = shape_inference(g, (512, 512, 3))
        assert shapes[g.output_id] == (512, 512, 1)
        bottleneck_convs = [n for n in g.nodes if n.kind == CONV and "bottleneck" in n.name]
        assert shapes[bottleneck_convs[0].id][:2] == (32, 32)  # 512 / 2^4

    def test_full_size_images_accepted(self):
        g = build_resunet(ArchConfig())
        shapes = shape_inference(g, (1200, 1600, 3))
        assert shapes[g.output_id] == (1200, 1600, 1)

    def test_indivisible_input_rejected(self):
        g = build_resunet(ArchConfig())
        with pytest.raises(ValueError, match="16"):
            shape_inference(g, (500, 500, 3))

    def test_output_matches_input_spatially(self):
        for depth in (1, 2, 3):
            g = build_resunet(ArchConfig(depth=depth))
            shapes = shape_inference(g, (64, 96, 3))
            assert shapes[g.output_id] == (64, 96, 1)

    def test_add_branch_shapes_agree(self):
        g = build_resunet(ArchConfig(depth=3, base_filters=8))
        shapes = shape_inference(g, (128, 128, 3))
        for node in g.nodes:
            if node.kind == ADD:
                a, b = node.inputs
                assert shapes[a] == shapes[b]

    def test_transposed_variant(self):
        g = build_resunet(ArchConfig(transposed_upsample=True))
        shapes = shape_inference(g, (256, 256, 3))
        assert shapes[g.output_id] == (256, 256, 1)


class TestParamCount:
    def test_single_1x1_conv(self):
        g = chain_graph((CONV, 1, 1, 3, 1))
        assert param_count(g) == 1 * 1 * 3 * 1 + 1  # 4

    def test_single_3x3_conv(self):
        g = chain_graph((CONV, 3, 1, 1, 16))
        assert param_count(g) == 9 * 1 * 16 + 16  # 160

    def test_extra_block_delta(self):
        cfg = ArchConfig(extra_bottleneck_block=False)
        base = param_count(build_resunet(cfg))
        wide = param_count(build_resunet(ArchConfig(extra_bottleneck_block=True)))
        c = cfg.filters_at(cfg.depth)
        k = cfg.bottleneck_kernel
        # extra block: two kxk convs (c->c) with bias + two batchnorms; the
        # shortcut is identity because channels do not change
        expected_delta = 2 * (k * k * c * c + c) + 2 * (2 * c)
        assert wide - base == expected_delta

    def test_invariant_under_input_size(self):
        g = build_resunet(ArchConfig())
        before = param_count(g)
        shape_inference(g, (512, 512, 3))
        shape_inference(g, (1200, 1600, 3))
        assert param_count(g) == before


class TestReceptiveField:
    def test_two_stacked_3x3(self):
        g = chain_graph((CONV, 3, 1), (CONV, 3, 1))
        assert receptive_field(g) == (5, 5)
        assert receptive_field_oracle(g, grid=64) == (5, 5)

    def test_conv_pool_conv(self):
        g = chain_graph((CONV, 3, 1), (MAXPOOL, 2, 2), (CONV, 3, 1))
        assert receptive_field(g) == (8, 8)
        assert receptive_field_oracle(g, grid=64) == (8, 8)

    def test_extra_bottleneck_strictly_larger(self):
        rf_wide = receptive_field(build_resunet(ArchConfig(extra_bottleneck_block=True)))
        rf_base = receptive_field(build_resunet(ArchConfig(extra_bottleneck_block=False)))
        assert rf_wide[0] > rf_base[0]
        assert rf_wide[1] > rf_base[1]

    @pytest.mark.parametrize("depth", [1, 2])
    @pytest.mark.parametrize("extra", [False, True])
    @pytest.mark.parametrize("colorspace", [False, True])
    def test_matches_dependency_oracle(self, depth, extra, colorspace):
        g = build_resunet(ArchConfig(depth=depth, extra_bottleneck_block=extra,
                                     colorspace_conv=colorspace))
        assert receptive_field(g) == receptive_field_oracle(g, grid=512)

    @pytest.mark.parametrize("depth", [1, 2])
    def test_transposed_matches_oracle(self, depth):
        g = build_resunet(ArchConfig(depth=depth, transposed_upsample=True))
        assert receptive_field(g) == receptive_field_oracle(g, grid=512)


class TestSummary:
    def test_summary_fields(self):
        g = build_resunet(ArchConfig())
        s = summarize(g, (512, 512, 3))
        assert s.divisibility == 16
        assert s.shapes[g.output_id] == (512, 512, 1)
        assert s.total_params == param_count(g)
        assert s.receptive_field == receptive_field(g)

    def test_json_dump_is_serializable(self):
        import json
        g = build_resunet(ArchConfig(depth=2, base_filters=8))
        info = summary_json_dict(g, (64, 64, 3))
        text = json.dumps(info)
        assert "receptive_field" in text
        assert len(info["nodes"]) == len(g.nodes)
