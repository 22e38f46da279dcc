import numpy as np
import pytest

from conftest import fd_gradient_check
from rtlfuse import autodiff as ad
from rtlfuse.autodiff import Tensor
from rtlfuse.cdfg import CdfEdge, CdfGraph, CdfNode, edge_type, parse_and_elaborate
from rtlfuse.cones import split_design
from rtlfuse.corpus import CLS_ID, PAD_ID
from rtlfuse.encoders import (
    EncoderParams,
    GraphEncoder,
    NetlistEncoder,
    TextEncoder,
    spatial_encoding,
)
from rtlfuse.layers import ParamStore

SMALL = EncoderParams(d_model=8, graph_layers=1, summary_layers=1, code_layers=1,
                      fusion_layers=1, heads=2, ff_mult=2, max_degree=8,
                      netlist_hidden=8, mgm_hidden=8,
                      max_summary_len=16, max_code_len=16)


def chain_graph(n):
    nodes = [CdfNode(0, "INPUT", 1, "a")]
    nodes += [CdfNode(i, "NOT", 1) for i in range(1, n)]
    edges = [CdfEdge(i, i + 1, edge_type(nodes[i].op, nodes[i + 1].op))
             for i in range(n - 1)]
    return CdfGraph(nodes, edges)


def test_spatial_self_distance_zero():
    g = chain_graph(3)
    d = spatial_encoding(g)
    assert np.all(np.diag(d) == 0)


def test_spatial_chain_clips_at_five():
    g = chain_graph(8)
    d = spatial_encoding(g, max_spatial=5)
    assert d[0, 7] == 5  # true distance 7, clipped
    assert d[0, 4] == 4


def test_spatial_unreachable_sentinel():
    nodes = [CdfNode(0, "INPUT", 1, "a"), CdfNode(1, "INPUT", 1, "b")]
    g = CdfGraph(nodes, [])
    d = spatial_encoding(g, max_spatial=5)
    assert d[0, 1] == 6 and d[1, 0] == 6


def test_spatial_matches_bfs_oracle():
    rng = np.random.default_rng(0)
    n = 12
    nodes = [CdfNode(i, "AND", 1) for i in range(n)]
    edges = []
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.append(CdfEdge(j, i, edge_type("AND", "AND")))
    g = CdfGraph(nodes, edges)
    d = spatial_encoding(g, max_spatial=5)
    # networkx oracle on the undirected view
    import networkx as nx

    ug = nx.Graph()
    ug.add_nodes_from(range(n))
    ug.add_edges_from((e.src, e.dst) for e in edges)
    for s in range(n):
        lengths = nx.single_source_shortest_path_length(ug, s)
        for t in range(n):
            expected = min(lengths[t], 5) if t in lengths else 6
            assert d[s, t] == expected


def cone_fixture():
    g = parse_and_elaborate(
        "module m(input clk, input [1:0] a, input [1:0] b, input s,"
        " output reg [1:0] q);"
        " always @(posedge clk) q <= s ? (a & b) : (a + b); endmodule")
    return split_design(g)[0]


def test_graph_encoder_shape_and_finite():
    cone = cone_fixture()
    enc = GraphEncoder(ParamStore(np.random.default_rng(0)), "g", SMALL)
    seq = enc(cone.graph)
    n = len(cone.graph.nodes)
    assert seq.vectors.shape == (n + 1, SMALL.d_model)
    assert np.all(np.isfinite(seq.vectors.data))
    assert np.linalg.norm(seq.cls.data) > 0
    single = CdfGraph([CdfNode(0, "REG", 1, "q")], [])
    assert enc(single).vectors.shape == (2, SMALL.d_model)


def test_graph_encoder_permutation_invariance():
    cone = cone_fixture()
    g = cone.graph
    enc = GraphEncoder(ParamStore(np.random.default_rng(1)), "g", SMALL)
    base = enc(g)
    perm = np.random.default_rng(3).permutation(len(g.nodes))
    nodes = [g.nodes[i] for i in perm]
    shuffled = CdfGraph(nodes, g.edges)
    out = enc(shuffled)
    assert np.allclose(out.cls.data, base.cls.data, atol=1e-10)
    pos_base = {n.id: i + 1 for i, n in enumerate(g.nodes)}
    pos_new = {n.id: i + 1 for i, n in enumerate(shuffled.nodes)}
    for nid in pos_base:
        assert np.allclose(out.vectors.data[pos_new[nid]],
                           base.vectors.data[pos_base[nid]], atol=1e-10)


def test_graph_encoder_mask_changes_output():
    cone = cone_fixture()
    enc = GraphEncoder(ParamStore(np.random.default_rng(2)), "g", SMALL)
    base = enc(cone.graph).cls.data
    masked = enc(cone.graph, masked_ids=frozenset([next(iter(cone.members))]))
    assert not np.allclose(masked.cls.data, base)


def test_text_encoder_shapes_and_determinism():
    store = ParamStore(np.random.default_rng(0))
    enc = TextEncoder(store, "t", SMALL, vocab_size=12, layers=1, max_len=16)
    ids = np.array([CLS_ID, 5, 6, 7])
    a = enc(ids)
    b = enc(ids)
    assert a.vectors.shape == (4, 8)
    assert np.array_equal(a.vectors.data, b.vectors.data)
    only_cls = enc(np.array([CLS_ID]))
    assert only_cls.vectors.shape == (1, 8)


def test_text_encoder_padding_invariance():
    store = ParamStore(np.random.default_rng(4))
    enc = TextEncoder(store, "t", SMALL, vocab_size=12, layers=1, max_len=16)
    ids = np.array([CLS_ID, 5, 6])
    out = enc(ids).vectors.data
    padded = np.array([CLS_ID, 5, 6, PAD_ID, PAD_ID])
    valid = np.array([True, True, True, False, False])
    out_padded = enc(padded, valid=valid).vectors.data
    assert np.allclose(out_padded[:3], out, atol=1e-12)


def gate_fixture():
    g = parse_and_elaborate(
        "module m(input clk, input a, input b, output reg q);"
        " always @(posedge clk) q <= a ^ b; endmodule")
    from rtlfuse.gatemap import lower_to_gates

    return lower_to_gates(g)


def test_netlist_encoder_pooled_is_mean():
    enc = NetlistEncoder(ParamStore(np.random.default_rng(0)), "n", SMALL)
    emb = enc(gate_fixture())
    assert np.allclose(emb.pooled.data, emb.node_vectors.data.mean(axis=0))
    single = CdfGraph([CdfNode(0, "DFF", 1, "q")], [])
    one = enc(single)
    assert np.allclose(one.pooled.data, one.node_vectors.data[0])


def test_netlist_encoder_isomorphism_invariance():
    g = gate_fixture()
    enc = NetlistEncoder(ParamStore(np.random.default_rng(5)), "n", SMALL)
    base = enc(g).pooled.data
    perm = np.random.default_rng(1).permutation(len(g.nodes))
    iso = CdfGraph([g.nodes[i] for i in perm], g.edges)
    assert np.allclose(enc(iso).pooled.data, base, atol=1e-10)


def test_netlist_encoder_finite_on_random_graphs():
    rng = np.random.default_rng(9)
    enc = NetlistEncoder(ParamStore(np.random.default_rng(0)), "n", SMALL)
    for _ in range(25):
        n = int(rng.integers(1, 12))
        nodes = [CdfNode(i, "AND2" if i % 2 else "INV", 1) for i in range(n)]
        edges = []
        for i in range(1, n):
            j = int(rng.integers(0, i))
            edges.append(CdfEdge(j, i, edge_type(nodes[j].op, nodes[i].op)))
        emb = enc(CdfGraph(nodes, edges))
        assert np.all(np.isfinite(emb.pooled.data))


def test_graph_encoder_gradient_matches_fd():
    cone = cone_fixture()
    store = ParamStore(np.random.default_rng(11))
    enc = GraphEncoder(store, "g", SMALL)
    target = np.random.default_rng(0).normal(size=(len(cone.graph.nodes) + 1, 8))

    def loss_fn():
        out = enc(cone.graph)
        diff = out.vectors - Tensor(target)
        return (diff * diff).mean()

    assert fd_gradient_check(loss_fn, store.params, coords_per_tensor=3) < 1e-4


def test_text_encoder_gradient_matches_fd():
    store = ParamStore(np.random.default_rng(12))
    enc = TextEncoder(store, "t", SMALL, vocab_size=10, layers=1, max_len=8)
    ids = np.array([CLS_ID, 5, 6, 7])
    target = np.random.default_rng(1).normal(size=(4, 8))

    def loss_fn():
        diff = enc(ids).vectors - Tensor(target)
        return (diff * diff).mean()

    assert fd_gradient_check(loss_fn, store.params, coords_per_tensor=3) < 1e-4


def test_netlist_encoder_gradient_matches_fd():
    store = ParamStore(np.random.default_rng(13))
    enc = NetlistEncoder(store, "n", SMALL)
    g = gate_fixture()
    target = np.random.default_rng(2).normal(size=8)

    def loss_fn():
        diff = enc(g).pooled - Tensor(target)
        return (diff * diff).sum()

    assert fd_gradient_check(loss_fn, store.params, coords_per_tensor=3) < 1e-4


def test_params_validation():
    with pytest.raises(ValueError):
        EncoderParams(d_model=10, heads=4)
