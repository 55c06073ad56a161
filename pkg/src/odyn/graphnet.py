"""Attributed graphs and graph-network blocks.

A graph holds a global vector per scene, per-node attributes, and directed
edges given by sender/receiver index arrays. Several scenes can live in
one graph as disjoint components: `node_graph` / `edge_graph` map each
node and edge to its scene, and aggregations respect those boundaries, so
a batch is just a bigger graph.

Node attributes come in up to three stacked channels (visual image
stacks, pose vectors, latent vectors); unused channels are None.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ShapeError
from .tensor import Network, Tensor, concat, gather_rows, segment_sum, zeros
from .tensor.core import Array


@dataclass
class NodeAttr:
    """Per-node attribute bundle; each field stacks over nodes or is None."""

    visual: Tensor | None = None
    pose: Tensor | None = None
    latent: Tensor | None = None


@dataclass
class AttributedGraph:
    """One or more scenes as a single graph.

    u: (G, Du) global attribute per scene, or None.
    visual/pose/latent: node attribute stacks, first axis = node.
    edge: (E, ...) edge attribute stack, or None when edges carry nothing.
    senders/receivers: (E,) node indices per directed edge.
    node_graph/edge_graph: scene index per node / edge.
    num_graphs: number of scenes G.
    """

    u: Tensor | None
    visual: Tensor | None
    pose: Tensor | None
    latent: Tensor | None
    edge: Tensor | None
    senders: Array
    receivers: Array
    node_graph: Array
    edge_graph: Array
    num_graphs: int

    @property
    def num_nodes(self) -> int:
        return len(self.node_graph)

    @property
    def num_edges(self) -> int:
        return len(self.senders)

    def node_attr(self) -> NodeAttr:
        return NodeAttr(self.visual, self.pose, self.latent)

    def with_nodes(self, na: NodeAttr) -> "AttributedGraph":
        return replace(self, visual=na.visual, pose=na.pose, latent=na.latent)

    @classmethod
    def single(
        cls,
        u: Tensor | None,
        *,
        visual: Tensor | None = None,
        pose: Tensor | None = None,
        latent: Tensor | None = None,
        edge: Tensor | None = None,
        senders: Array | None = None,
        receivers: Array | None = None,
    ) -> "AttributedGraph":
        """Build a one-scene graph; validates node counts and edge indices."""
        counts = {
            name: t.shape[0]
            for name, t in (("visual", visual), ("pose", pose), ("latent", latent))
            if t is not None
        }
        if not counts:
            raise ShapeError("a graph needs at least one node attribute channel")
        n = next(iter(counts.values()))
        if any(c != n for c in counts.values()):
            raise ShapeError(f"node attribute stacks disagree on node count: {counts}")
        s = np.asarray(senders if senders is not None else [], dtype=np.int64)
        r = np.asarray(receivers if receivers is not None else [], dtype=np.int64)
        if s.shape != r.shape:
            raise ShapeError(f"senders {s.shape} and receivers {r.shape} differ")
        if s.size and (s.min() < 0 or s.max() >= n or r.min() < 0 or r.max() >= n):
            raise DomainError(f"edge endpoint out of range for {n} nodes")
        if edge is not None and edge.shape[0] != s.size:
            raise ShapeError(f"edge attributes {edge.shape[0]} vs {s.size} edges")
        if u is not None and (u.ndim != 2 or u.shape[0] != 1):
            raise ShapeError(f"global attribute must be (1, Du), got {u.shape}")
        return cls(
            u=u,
            visual=visual,
            pose=pose,
            latent=latent,
            edge=edge,
            senders=s,
            receivers=r,
            node_graph=np.zeros(n, dtype=np.int64),
            edge_graph=np.zeros(s.size, dtype=np.int64),
            num_graphs=1,
        )

    @classmethod
    def batch(cls, graphs: Sequence["AttributedGraph"]) -> "AttributedGraph":
        """Concatenate scenes into one disjoint graph.

        Input attribute tensors are treated as constants (batching happens
        on data arrays, not through the tape).
        """
        if not graphs:
            raise ShapeError("cannot batch zero graphs")

        def cat(field: str) -> Tensor | None:
            vals = [getattr(g, field) for g in graphs]
            if all(v is None for v in vals):
                return None
            if any(v is None for v in vals):
                raise ShapeError(f"inconsistent {field!r} presence across batched graphs")
            return Tensor(np.concatenate([v.data for v in vals], axis=0))

        node_offsets = np.cumsum([0] + [g.num_nodes for g in graphs])
        senders = np.concatenate([g.senders + off for g, off in zip(graphs, node_offsets)])
        receivers = np.concatenate([g.receivers + off for g, off in zip(graphs, node_offsets)])
        graph_offsets = np.cumsum([0] + [g.num_graphs for g in graphs])
        node_graph = np.concatenate(
            [g.node_graph + off for g, off in zip(graphs, graph_offsets)]
        )
        edge_graph = np.concatenate(
            [g.edge_graph + off for g, off in zip(graphs, graph_offsets)]
        )
        return cls(
            u=cat("u"),
            visual=cat("visual"),
            pose=cat("pose"),
            latent=cat("latent"),
            edge=cat("edge"),
            senders=senders.astype(np.int64),
            receivers=receivers.astype(np.int64),
            node_graph=node_graph.astype(np.int64),
            edge_graph=edge_graph.astype(np.int64),
            num_graphs=int(graph_offsets[-1]),
        )

    def permuted_nodes(self, perm: Array) -> "AttributedGraph":
        """Reorder nodes by `perm` (new position i holds old node perm[i]),
        remapping edge endpoints accordingly. For equivariance checks."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))

        def pick(t: Tensor | None) -> Tensor | None:
            return None if t is None else Tensor(t.data[perm])

        return replace(
            self,
            visual=pick(self.visual),
            pose=pick(self.pose),
            latent=pick(self.latent),
            senders=inv[self.senders],
            receivers=inv[self.receivers],
            node_graph=self.node_graph[perm],
        )

    def permuted_edges(self, perm: Array) -> "AttributedGraph":
        perm = np.asarray(perm, dtype=np.int64)
        return replace(
            self,
            edge=None if self.edge is None else Tensor(self.edge.data[perm]),
            senders=self.senders[perm],
            receivers=self.receivers[perm],
            edge_graph=self.edge_graph[perm],
        )


def fully_connected_edges(n: int) -> tuple[Array, Array]:
    """All N*(N-1) directed pairs, no self loops, sender-major order."""
    if n < 0:
        raise DomainError(f"node count must be non-negative, got {n}")
    senders = []
    receivers = []
    for s in range(n):
        for r in range(n):
            if s != r:
                senders.append(s)
                receivers.append(r)
    return np.asarray(senders, dtype=np.int64), np.asarray(receivers, dtype=np.int64)


def replace_global(g: AttributedGraph, u: Tensor) -> AttributedGraph:
    """Swap the global attribute; widths must match when one is present."""
    if u.ndim != 2 or u.shape[0] != g.num_graphs:
        raise ShapeError(
            f"replacement global {u.shape} does not match {g.num_graphs} scenes"
        )
    if g.u is not None and g.u.shape[1] != u.shape[1]:
        raise ShapeError(
            f"replacement global width {u.shape[1]} does not match {g.u.shape[1]}"
        )
    return replace(g, u=u)


def _expect_width(t: Tensor, width: int, what: str) -> None:
    if t.shape[1] != width:
        raise ShapeError(f"{what} has width {t.shape[1]}, expected {width}")


def full_gn_block(
    g: AttributedGraph,
    phi_edge: Callable[[Tensor], Tensor] | None,
    phi_node: Callable[[Tensor], Tensor],
    phi_global: Callable[[Tensor], Tensor],
    edge_out_width: int | None = None,
) -> AttributedGraph:
    """One full graph-network update on latent attributes.

    Edge update sees (edge, sender node, receiver node, global); incoming
    updated edges are sum-aggregated per node (zero vector of the declared
    width when a node receives none); node update sees (aggregate, node,
    global); global update sees (sum of edges, sum of nodes, global), each
    sum taken per scene.

    `phi_edge=None` drops the edge stream entirely: nodes update from
    (node, global) alone and the output graph carries no edge attributes.
    """
    if g.latent is None or g.u is None:
        raise ShapeError("full_gn_block needs latent node attributes and a global")
    v = g.latent
    u = g.u
    n = g.num_nodes
    ng = g.num_graphs

    u_per_node = gather_rows(u, g.node_graph)

    if phi_edge is None:
        e2 = None
        v_in = concat([v, u_per_node], axis=1)
        v2 = phi_node(v_in)
        u_in = concat([segment_sum(v2, g.node_graph, ng), u], axis=1)
        u2 = phi_global(u_in)
        return replace(g, latent=v2, edge=e2, u=u2)

    if g.num_edges > 0:
        if g.edge is None:
            raise ShapeError("graph has edges but no edge attributes")
        e_in = concat(
            [
                g.edge,
                gather_rows(v, g.senders),
                gather_rows(v, g.receivers),
                gather_rows(u, g.edge_graph),
            ],
            axis=1,
        )
        e2 = phi_edge(e_in)
        agg = segment_sum(e2, g.receivers, n)
        e_sum = segment_sum(e2, g.edge_graph, ng)
    else:
        if edge_out_width is None:
            raise ShapeError(
                "edge-free graph needs edge_out_width to shape the zero aggregate"
            )
        e2 = Tensor(np.zeros((0, edge_out_width), dtype=v.dtype))
        agg = zeros((n, edge_out_width), dtype=v.dtype)
        e_sum = zeros((ng, edge_out_width), dtype=v.dtype)

    v_in = concat([agg, v, u_per_node], axis=1)
    v2 = phi_node(v_in)
    u_in = concat([e_sum, segment_sum(v2, g.node_graph, ng), u], axis=1)
    u2 = phi_global(u_in)
    return replace(g, latent=v2, edge=e2, u=u2)


def independent_block(
    g: AttributedGraph,
    f_edge: Callable[[Tensor], Tensor] | None = None,
    f_node: Callable[[NodeAttr], NodeAttr] | None = None,
    f_global: Callable[[Tensor], Tensor] | None = None,
) -> AttributedGraph:
    """Apply maps elementwise: every edge, node, and global independently.

    Omitted maps leave their channel untouched.
    """
    out = g
    if f_node is not None:
        out = out.with_nodes(f_node(g.node_attr()))
    if f_edge is not None:
        if g.edge is None:
            raise ShapeError("independent_block got an edge map but no edge attributes")
        out = replace(out, edge=f_edge(g.edge))
    if f_global is not None:
        if g.u is None:
            raise ShapeError("independent_block got a global map but no global")
        out = replace(out, u=f_global(g.u))
    return out


def concat_latent_graphs(a: AttributedGraph, b: AttributedGraph) -> AttributedGraph:
    """Feature-concatenate two latent graphs over the same topology."""
    if a.num_nodes != b.num_nodes or a.num_edges != b.num_edges:
        raise ShapeError(
            f"topology mismatch: {a.num_nodes}/{a.num_edges} vs {b.num_nodes}/{b.num_edges} nodes/edges"
        )
    if (a.edge is None) != (b.edge is None):
        raise ShapeError("edge attribute presence differs between graphs")
    return replace(
        a,
        latent=concat([a.latent, b.latent], axis=1),
        edge=None if a.edge is None else concat([a.edge, b.edge], axis=1),
        u=concat([a.u, b.u], axis=1),
    )


@dataclass
class EncodeProcessDecode:
    """Wiring for rollout prediction over an attributed graph.

    encode_* map raw attributes to latent vectors once per rollout (the
    global encoder also embeds each step's control vector). The core is a
    full GN block applied per step to the concatenation of the encoded
    graph and the previous step's core output (zeros at step one), so its
    input widths are constant across steps. decode_* map each step's core
    output back to observable attributes independently.
    """

    encode_node: Callable[[NodeAttr], NodeAttr]
    encode_global: Callable[[Tensor], Tensor]
    core_node: Network
    core_global: Network
    encode_edge: Callable[[Tensor], Tensor] | None = None
    core_edge: Network | None = None
    decode_node: Callable[[NodeAttr], NodeAttr] | None = None
    decode_edge: Callable[[Tensor], Tensor] | None = None
    decode_global: Callable[[Tensor], Tensor] | None = None
    training: bool = False

    def core_widths(self) -> tuple[int | None, int, int]:
        e = self.core_edge.out_width if self.core_edge is not None else None
        return e, self.core_node.out_width, self.core_global.out_width


def encode_process_decode(
    g0: AttributedGraph,
    controls: Sequence[Tensor],
    nets: EncodeProcessDecode,
) -> list[AttributedGraph]:
    """Roll the core forward once per control vector; decode every step.

    Returns one decoded graph per step. The input graph is encoded once;
    each step swaps the freshly encoded control in as the global.
    """
    n = len(controls)
    if n == 0:
        raise DomainError("encode_process_decode needs at least one control vector")

    enc = independent_block(
        g0,
        f_edge=nets.encode_edge,
        f_node=nets.encode_node,
        f_global=nets.encode_global,
    )

    ew, vw, uw = nets.core_widths()
    dtype = enc.latent.dtype
    cur = replace(
        enc,
        latent=zeros((g0.num_nodes, vw), dtype=dtype),
        edge=None if ew is None else zeros((g0.num_edges, ew), dtype=dtype),
        u=zeros((g0.num_graphs, uw), dtype=dtype),
    )

    training = nets.training
    core_edge = None
    if nets.core_edge is not None:
        core_edge = lambda x: nets.core_edge(x, training)  # noqa: E731

    outs = []
    for k in range(n):
        c_lat = nets.encode_global(controls[k])
        step_in = concat_latent_graphs(replace_global(enc, c_lat), cur)
        cur = full_gn_block(
            step_in,
            core_edge,
            lambda x: nets.core_node(x, training),
            lambda x: nets.core_global(x, training),
            edge_out_width=ew,
        )
        outs.append(
            independent_block(
                cur,
                f_edge=nets.decode_edge,
                f_node=nets.decode_node,
                f_global=nets.decode_global,
            )
        )
    return outs
