"""Simulated Zcash-side ledger.

Blocks carry shielded transactions; every output's note commitment goes
into an append-only Merkle tree whose root is committed in the header, and
every spend reveals a nullifier that may appear at most once per branch.
Mining is discrete (work 1 per block, longest chain wins) and adversarial
side branches plus reorgs are first-class so relay-poisoning scenarios can
be scripted.

Transactions are (statement, witness) pairs: the witness (source notes,
nullifier keys, values) is consumed by the validator, while the public view
contains only nullifiers, commitments, ciphertexts and the fee.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .notes import (
    Address,
    Note,
    NoteCiphertext,
    NoteCommitment,
    Nullifier,
    commit_note,
    derive_nullifier,
    digest,
    encode_int,
    encrypt_note,
    rng_bytes,
    ZERO32,
)

DEFAULT_TREE_DEPTH = 16
DEFAULT_FEE = 1000  # 0.00001 ZEC in base units


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class Rejection:
    reason: str

    def __bool__(self):
        return False


# --- commitment tree ----------------------------------------------------------


def _empty_roots(depth: int) -> list[bytes]:
    roots = [digest(b"empty-leaf")]
    for level in range(depth):
        roots.append(digest(b"tree-node", roots[level], roots[level]))
    return roots


_EMPTY_CACHE: dict[int, list[bytes]] = {}


def empty_roots(depth: int) -> list[bytes]:
    if depth not in _EMPTY_CACHE:
        _EMPTY_CACHE[depth] = _empty_roots(depth)
    return _EMPTY_CACHE[depth]


@dataclass(frozen=True)
class MerklePath:
    position: int
    siblings: tuple[bytes, ...]


def fold_path(leaf: bytes, path: MerklePath) -> bytes:
    """Recompute the root implied by a leaf and its sibling path."""
    node = leaf
    pos = path.position
    for sibling in path.siblings:
        if pos & 1:
            node = digest(b"tree-node", sibling, node)
        else:
            node = digest(b"tree-node", node, sibling)
        pos >>= 1
    return node


class CommitmentTree:
    """Append-only Merkle tree over note commitments.

    Roots and paths can be computed for any historical prefix of the leaf
    sequence, which is what anchors inclusion proofs to the block that the
    prover cites.
    """

    def __init__(self, depth: int = DEFAULT_TREE_DEPTH):
        self.depth = depth
        self.leaves: list[bytes] = []
        self._empties = empty_roots(depth)
        self._root_cache: dict[int, bytes] = {}

    def __len__(self):
        return len(self.leaves)

    def append(self, cm: NoteCommitment) -> int:
        if len(self.leaves) >= 2**self.depth:
            raise ChainError("commitment tree full")
        self.leaves.append(cm.digest)
        return len(self.leaves) - 1

    def truncate(self, size: int) -> None:
        del self.leaves[size:]
        self._root_cache = {n: r for n, r in self._root_cache.items() if n <= size}

    def _node(self, level: int, start: int, size: int) -> bytes:
        """Root of the subtree of height `level` starting at leaf `start`,
        considering only the first `size` leaves."""
        if start >= size:
            return self._empties[level]
        if level == 0:
            return self.leaves[start]
        half = 1 << (level - 1)
        return digest(b"tree-node",
                      self._node(level - 1, start, size),
                      self._node(level - 1, start + half, size))

    def root_at(self, size: int) -> bytes:
        if size > len(self.leaves):
            raise ChainError("prefix larger than tree")
        if size not in self._root_cache:
            self._root_cache[size] = self._node(self.depth, 0, size)
        return self._root_cache[size]

    def root(self) -> bytes:
        return self.root_at(len(self.leaves))

    def path_at(self, position: int, size: int) -> MerklePath:
        """Sibling path for a leaf within the tree state after `size` leaves."""
        if position >= size:
            raise ChainError("leaf not present in the cited tree state")
        siblings = []
        index = position
        for level in range(self.depth):
            sibling_start = (index ^ 1) << level
            siblings.append(self._node(level, sibling_start, size))
            index >>= 1
        return MerklePath(position, tuple(siblings))


# --- transactions -------------------------------------------------------------


@dataclass(frozen=True)
class SpendWitness:
    note: Note
    nullifier_key: bytes


@dataclass(frozen=True)
class SpendDescription:
    nullifier: Nullifier
    witness: SpendWitness


@dataclass(frozen=True)
class OutputDescription:
    cm: NoteCommitment
    ciphertext: NoteCiphertext
    note_witness: Note


@dataclass(frozen=True)
class ShieldedTx:
    spends: tuple[SpendDescription, ...]
    outputs: tuple[OutputDescription, ...]
    fee: int

    def txid(self) -> str:
        parts = [s.nullifier.digest for s in self.spends]
        parts += [o.cm.digest for o in self.outputs]
        parts.append(encode_int(self.fee))
        return digest(b"txid", *parts).hex()

    def public_view(self) -> dict:
        """Observer-visible statement: no values, no witnesses."""
        return {
            "txid": self.txid(),
            "nullifiers": [s.nullifier.hex() for s in self.spends],
            "commitments": [o.cm.hex() for o in self.outputs],
            "fee": self.fee,
        }


class ShieldedPool:
    """Validation state shared by any shielded value pool: the commitment
    tree plus the nullifier set, with per-application deltas for rollback."""

    def __init__(self, depth: int = DEFAULT_TREE_DEPTH):
        self.tree = CommitmentTree(depth)
        self.leaf_index: dict[bytes, int] = {}
        self.nullifiers: set[bytes] = set()

    def knows_commitment(self, cm: NoteCommitment) -> bool:
        return cm.digest in self.leaf_index

    def validate_tx(self, tx: ShieldedTx, extra_nullifiers: set[bytes] = frozenset(),
                    allow_unbacked: bool = False) -> Optional[Rejection]:
        seen = set()
        for spend in tx.spends:
            expected = derive_nullifier(spend.witness.note, spend.witness.nullifier_key)
            if expected != spend.nullifier:
                return Rejection("nullifier-mismatch")
            nf = spend.nullifier.digest
            if nf in seen or nf in self.nullifiers or nf in extra_nullifiers:
                return Rejection("double-spend")
            seen.add(nf)
            if not allow_unbacked and commit_note(spend.witness.note).digest not in self.leaf_index:
                return Rejection("unknown-note")
        for out in tx.outputs:
            if commit_note(out.note_witness) != out.cm:
                return Rejection("commitment-mismatch")
        if sum(s.witness.note.value for s in tx.spends) != (
            sum(o.note_witness.value for o in tx.outputs) + tx.fee
        ):
            if not (allow_unbacked and not tx.spends):
                return Rejection("value-imbalance")
        return None

    def apply_tx(self, tx: ShieldedTx) -> None:
        for spend in tx.spends:
            self.nullifiers.add(spend.nullifier.digest)
        for out in tx.outputs:
            index = self.tree.append(out.cm)
            self.leaf_index[out.cm.digest] = index

    def unapply_leaves(self, size: int, removed_nullifiers: set[bytes]) -> None:
        for cm, idx in list(self.leaf_index.items()):
            if idx >= size:
                del self.leaf_index[cm]
        self.tree.truncate(size)
        self.nullifiers -= removed_nullifiers


# --- blocks and chain ---------------------------------------------------------


@dataclass(frozen=True)
class BlockHeader:
    height: int
    parent: bytes
    tree_root: bytes
    work: int
    nonce: int = 0  # miner entropy; keeps equal-content blocks distinct

    @property
    def hash(self) -> bytes:
        return digest(b"block-header", encode_int(self.height), self.parent,
                      self.tree_root, encode_int(self.work), encode_int(self.nonce))


@dataclass
class Block:
    header: BlockHeader
    txs: list[ShieldedTx]
    leaf_count: int  # tree size after this block, on its own branch
    new_nullifiers: set[bytes] = field(default_factory=set)
    cum_work: int = 0


@dataclass(frozen=True)
class ReorgReport:
    old_tip: bytes
    new_tip: bytes
    fork_height: int
    orphaned_txids: tuple[str, ...]


class ChainState:
    """One simulated proof-of-work chain of shielded blocks.

    There is a single main chain whose pool state (tree, nullifiers) is
    materialized; side branches store blocks only and get materialized on
    reorg. Genesis outputs may create value from nothing, which is how
    scenarios seed wallets.
    """

    def __init__(self, depth: int = DEFAULT_TREE_DEPTH, fee: int = DEFAULT_FEE):
        self.fee = fee
        self.pool = ShieldedPool(depth)
        self.blocks: dict[bytes, Block] = {}
        self.main: list[bytes] = []
        self.mempool: list[ShieldedTx] = []
        self._mempool_nullifiers: set[bytes] = set()
        self._listeners: list[Callable[[Block], None]] = []
        self._mine_counter = 0
        genesis_header = BlockHeader(0, ZERO32, self.pool.tree.root(), 1)
        genesis = Block(genesis_header, [], 0, set(), cum_work=1)
        self.blocks[genesis_header.hash] = genesis
        self.main.append(genesis_header.hash)

    # -- queries --

    @property
    def tip(self) -> Block:
        return self.blocks[self.main[-1]]

    @property
    def height(self) -> int:
        return self.tip.header.height

    def on_block(self, callback: Callable[[Block], None]) -> None:
        self._listeners.append(callback)

    def main_work(self) -> int:
        return self.tip.cum_work

    def block_on_main(self, block_hash: bytes) -> bool:
        block = self.blocks.get(block_hash)
        if block is None:
            return False
        h = block.header.height
        return h < len(self.main) and self.main[h] == block_hash

    # -- transactions --

    def submit_shielded_tx(self, tx: ShieldedTx, allow_unbacked: bool = False):
        """Queue a transaction for the next honest block; nullifiers are
        reserved immediately so a conflicting spend cannot enter the pool."""
        rej = self.pool.validate_tx(tx, self._mempool_nullifiers, allow_unbacked)
        if rej is not None:
            return rej
        self.mempool.append(tx)
        for s in tx.spends:
            self._mempool_nullifiers.add(s.nullifier.digest)
        return tx.txid()

    # -- mining --

    def mine_block(self, parent_hash: Optional[bytes] = None,
                   txs: Optional[list[ShieldedTx]] = None) -> BlockHeader:
        """Append one block. On the main tip the mempool is drained; on a
        side branch the caller supplies the (possibly empty) body."""
        parent_hash = parent_hash if parent_hash is not None else self.main[-1]
        if parent_hash not in self.blocks:
            raise ChainError("unknown parent")
        parent = self.blocks[parent_hash]
        on_main_tip = parent_hash == self.main[-1]

        if on_main_tip and txs is None:
            txs = self.mempool
            self.mempool = []
            self._mempool_nullifiers = set()
        txs = txs or []

        if on_main_tip:
            new_nullifiers = set()
            for tx in txs:
                self.pool.apply_tx(tx)
                new_nullifiers |= {s.nullifier.digest for s in tx.spends}
            leaf_count = len(self.pool.tree)
            root = self.pool.tree.root_at(leaf_count)
        elif not txs:
            # empty side block: tree state is exactly the parent's
            new_nullifiers = set()
            leaf_count = parent.leaf_count
            root = parent.header.tree_root
        else:
            # side branch with a body: materialize the branch's leaves
            branch_leaves, _ = self._branch_state(parent_hash)
            new_nullifiers = set()
            for tx in txs:
                for out in tx.outputs:
                    branch_leaves.append(out.cm.digest)
                new_nullifiers |= {s.nullifier.digest for s in tx.spends}
            leaf_count = len(branch_leaves)
            root = self._root_of(branch_leaves)

        self._mine_counter += 1
        header = BlockHeader(parent.header.height + 1, parent_hash, root, 1,
                             nonce=self._mine_counter)
        block = Block(header, list(txs), leaf_count, new_nullifiers,
                      cum_work=parent.cum_work + 1)
        self.blocks[header.hash] = block
        if on_main_tip:
            self.main.append(header.hash)
            for listener in self._listeners:
                listener(block)
        return header

    def _root_of(self, leaves: list[bytes]) -> bytes:
        scratch = CommitmentTree(self.pool.tree.depth)
        scratch.leaves = list(leaves)
        return scratch.root()

    def _branch_state(self, tip_hash: bytes) -> tuple[list[bytes], set[bytes]]:
        chain = self._path_from_genesis(tip_hash)
        leaves: list[bytes] = []
        nfs: set[bytes] = set()
        for bh in chain:
            block = self.blocks[bh]
            for tx in block.txs:
                leaves.extend(out.cm.digest for out in tx.outputs)
            nfs |= block.new_nullifiers
        return leaves, nfs

    def _path_from_genesis(self, tip_hash: bytes) -> list[bytes]:
        chain = []
        cursor = tip_hash
        while True:
            chain.append(cursor)
            block = self.blocks[cursor]
            if block.header.height == 0:
                break
            cursor = block.header.parent
        chain.reverse()
        return chain

    # -- reorg --

    def reorg_to(self, branch_tip: bytes):
        """Switch the main chain to a strictly heavier branch."""
        if branch_tip not in self.blocks:
            return Rejection("unknown-branch")
        branch = self.blocks[branch_tip]
        if branch.cum_work <= self.main_work():
            return Rejection("insufficient-work")
        new_chain = self._path_from_genesis(branch_tip)
        fork_height = 0
        limit = min(len(new_chain), len(self.main))
        while fork_height + 1 < limit and new_chain[fork_height + 1] == self.main[fork_height + 1]:
            fork_height += 1

        orphaned = []
        removed_nfs: set[bytes] = set()
        for bh in self.main[fork_height + 1:]:
            block = self.blocks[bh]
            orphaned.extend(block.txs)
            removed_nfs |= block.new_nullifiers
        fork_block = self.blocks[self.main[fork_height]]
        self.pool.unapply_leaves(fork_block.leaf_count, removed_nfs)

        old_tip = self.main[-1]
        self.main = new_chain[: fork_height + 1]
        for bh in new_chain[fork_height + 1:]:
            block = self.blocks[bh]
            for tx in block.txs:
                self.pool.apply_tx(tx)
            block.leaf_count = len(self.pool.tree)
            self.main.append(bh)
            for listener in self._listeners:
                listener(block)

        # transactions unique to the abandoned branch go back to the mempool
        requeued = []
        for tx in orphaned:
            if self.pool.validate_tx(tx, set()) is None:
                requeued.append(tx)
        self.mempool = requeued + self.mempool
        self._mempool_nullifiers = {
            s.nullifier.digest for tx in self.mempool for s in tx.spends
        }
        return ReorgReport(old_tip, branch_tip, fork_height,
                           tuple(tx.txid() for tx in orphaned))

    # -- inclusion proofs --

    def merkle_path(self, cm: NoteCommitment, block_hash: bytes):
        """Path from a commitment to the cited main-chain block's root."""
        if not self.block_on_main(block_hash):
            return Rejection("block-not-on-main")
        size = self.blocks[block_hash].leaf_count
        position = self.pool.leaf_index.get(cm.digest)
        if position is None or position >= size:
            return Rejection("not-found")
        return self.pool.tree.path_at(position, size)

    def replay_from_genesis(self) -> tuple[bytes, int, set[bytes]]:
        """Full independent replay of the main chain; used as a test oracle
        against the incrementally maintained state."""
        scratch = ShieldedPool(self.pool.tree.depth)
        for bh in self.main:
            for tx in self.blocks[bh].txs:
                scratch.apply_tx(tx)
        return scratch.tree.root(), len(scratch.tree), set(scratch.nullifiers)


# --- wallets -------------------------------------------------------------------


class Wallet:
    """Witness-side note tracking for one actor on one shielded pool."""

    def __init__(self, owner: str, address: Address, nullifier_key: bytes):
        self.owner = owner
        self.address = address
        self.nullifier_key = nullifier_key
        self.unspent: dict[bytes, Note] = {}
        self.expected: dict[bytes, Note] = {}

    def credit(self, note: Note) -> None:
        self.unspent[commit_note(note).digest] = note

    def expect(self, note: Note) -> None:
        """Register a note we created for ourselves (e.g. change) so it is
        credited when its commitment appears on chain."""
        self.expected[commit_note(note).digest] = note

    def observe_commitment(self, cm: NoteCommitment) -> None:
        note = self.expected.pop(cm.digest, None)
        if note is not None:
            self.credit(note)

    def balance(self) -> int:
        return sum(n.value for n in self.unspent.values())

    def select_notes(self, amount: int) -> list[Note]:
        picked, total = [], 0
        for note in sorted(self.unspent.values(), key=lambda n: (-n.value, n.rcm)):
            if total >= amount:
                break
            picked.append(note)
            total += note.value
        if total < amount:
            raise ChainError(f"{self.owner}: insufficient funds ({total} < {amount})")
        return picked

    def mark_spent(self, notes: list[Note]) -> None:
        for note in notes:
            self.unspent.pop(commit_note(note).digest, None)


def build_transfer(wallet: Wallet, payments: list[tuple[Address, int, bytes]],
                   fee: int, directory, rng) -> tuple[ShieldedTx, list[Note]]:
    """Spend from a wallet to a list of (address, value, rcm) outputs, with
    change back to the wallet. Returns the tx and the created notes in
    payment order (change note last when present)."""
    total_out = sum(v for _, v, _ in payments) + fee
    sources = wallet.select_notes(total_out)
    spends = tuple(
        SpendDescription(derive_nullifier(n, wallet.nullifier_key),
                         SpendWitness(n, wallet.nullifier_key))
        for n in sources
    )
    notes = [Note(addr, value, rcm) for addr, value, rcm in payments]
    change = sum(n.value for n in sources) - total_out
    if change > 0:
        notes.append(Note(wallet.address, change, rng_bytes(rng, 32)))
    outputs = []
    for note in notes:
        epk = directory.new_ephemeral(rng)
        secret = directory.secret_for(epk, note.address)
        outputs.append(OutputDescription(commit_note(note),
                                         encrypt_note(note, note.address, secret, epk),
                                         note))
    return ShieldedTx(spends, tuple(outputs), fee), notes
