"""Issue and Redeem state machines over the two simulated ledgers.

The engine owns every component (backing chain, relay, issuing chain,
oracle, vault registry) plus the actors' wallets, and exposes exactly the
protocol operations. Each operation appends one trace row

    tick, actor, op, request_id, state_before, state_after, outcome

which is the conformance contract for trace-grammar tests. Deadline
enforcement happens once per tick, after actors had their chance to move:
a missed mint deadline forfeits the issuer's warranty, a silent vault has
its pending mint auto-confirmed (and pays the warranty from collateral),
and a silent vault on a redeem has the burn voided against it.

Determinism contract: identical (config, seed) yields identical traces,
byte for byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from random import Random
from typing import Optional

from .issuing_chain import (
    CONFIRMED,
    PENDING,
    VOIDED,
    BurnStatement,
    BurnTransfer,
    BurnWitness,
    IssuingChain,
    MintStatement,
    MintTransfer,
    MintWitness,
    post_fee_amount,
)
from .notes import (
    CHALLENGE_UPHELD,
    Note,
    NoteCiphertext,
    NoteCommitment,
    SharedSecret,
    SharedSecretDirectory,
    commit_note,
    decrypt_note,
    derive_rcm,
    encrypt_note,
    random_address,
    rng_bytes,
    verify_challenge,
)
from .oracle import RateFeed
from .relay import Relay
from .vault_registry import RegistryParams, VaultRegistry
from .zcash_chain import (
    ChainState,
    OutputDescription,
    Rejection,
    ShieldedTx,
    Wallet,
    build_transfer,
)

# request states
ISSUE_START = "IssueStart"
AWAITING_MINT = "AwaitingMint"
AWAIT_ISSUE_CONFIRM = "AwaitIssueConfirm"
ISSUE_CHALLENGED = "IssueChallenged"
ISSUE_SUCCESS = "IssueSuccess"
REDEEM_START = "RedeemStart"
AWAIT_REDEEM_CONFIRM = "AwaitRedeemConfirm"
REDEEM_CHALLENGED = "RedeemChallenged"
REDEEM_SUCCESS = "RedeemSuccess"

OK = "ok"


class ProtocolError(RuntimeError):
    """Internal inconsistency: a protocol bug, not an actor mistake."""


@dataclass
class ProtocolConfig:
    params: RegistryParams
    relay_k: int = 24
    delta_mint: int = 24
    delta_confirm_issue: int = 6
    delta_confirm_redeem: int = 24
    zc_block_interval: int = 1
    zc_fee: int = 1000
    tree_depth: int = 16


@dataclass
class LockPermit:
    permit_id: str
    issuer: str
    vault_id: str
    nonce: bytes
    expiry: int
    used: bool = False


@dataclass
class RequestRecord:
    request_id: str
    kind: str  # "issue" | "redeem"
    state: str
    requester: str
    vault_id: str
    permit: Optional[LockPermit] = None
    lock_cm: Optional[bytes] = None
    release_cm: Optional[bytes] = None
    ciphertext: Optional[NoteCiphertext] = None
    deadline_mint: Optional[int] = None
    deadline_confirm: Optional[int] = None
    pending_txid: Optional[str] = None
    released: bool = False
    terminal: bool = False
    close_reason: Optional[str] = None


@dataclass
class ActorAccount:
    name: str
    zcash: Wallet
    wzec: Wallet


@dataclass
class EngineMetrics:
    events: list = field(default_factory=list)  # (tick, kind, *details)
    supply_series: list = field(default_factory=list)
    zec_locked_total: int = 0
    zec_released_total: int = 0
    slash_count: int = 0
    challenge_upheld: int = 0
    challenge_rejected: int = 0
    replay_rejections: int = 0
    relay_violations: int = 0
    liquidation_count: int = 0

    def record(self, tick: int, kind: str, *details) -> None:
        self.events.append((tick, kind) + tuple(details))


class Engine:
    def __init__(self, config: ProtocolConfig, seed: int):
        self.config = config
        self.rng = Random(seed)
        self.directory = SharedSecretDirectory(rng_bytes(self.rng, 32))
        self.zcash = ChainState(depth=config.tree_depth, fee=config.zc_fee)
        self.relay = Relay(self.zcash.tip.header, finality_depth=config.relay_k)
        self.oracle = RateFeed()
        self.issuing = IssuingChain(self.relay, config.params.f, config.params.v_max,
                                    tree_depth=config.tree_depth)
        self.registry = VaultRegistry(config.params, self.issuing.i_ledger, self.oracle)
        self.now = 0
        self.relayer_muted = False
        self.actors: dict[str, ActorAccount] = {}
        self.requests: dict[str, RequestRecord] = {}
        self.permits: dict[str, LockPermit] = {}
        self.trace: list[tuple] = []
        self.metrics = EngineMetrics()
        self._counter = {"request": 0, "permit": 0}
        self._genesis_values: list[tuple[str, int]] = []
        self._started = False
        self._lock_witness: dict[str, Note] = {}  # request -> lock note
        self._mint_transfers: dict[str, MintTransfer] = {}
        self._burn_transfers: dict[str, BurnTransfer] = {}
        self._cm_block: dict[bytes, bytes] = {}      # mined cm -> block hash
        self._watched_locks: dict[bytes, int] = {}
        self._watched_releases: dict[bytes, int] = {}
        self.zcash.on_block(self._scan_block)

    # -- setup -----------------------------------------------------------------

    def add_actor(self, name: str, zec_notes: tuple[int, ...] = (),
                  i_balance: int = 0) -> ActorAccount:
        if self._started:
            raise ProtocolError("actors must be added before start()")
        account = ActorAccount(
            name,
            zcash=Wallet(name, random_address(self.rng), rng_bytes(self.rng, 32)),
            wzec=Wallet(name, random_address(self.rng), rng_bytes(self.rng, 32)),
        )
        self.actors[name] = account
        for value in zec_notes:
            self._genesis_values.append((name, value))
        if i_balance:
            self.issuing.i_ledger.deposit(name, i_balance)
        return account

    def start(self) -> None:
        """Mine the funding block that seeds actor wallets and feed it to
        the relay."""
        if self._started:
            raise ProtocolError("already started")
        self._started = True
        if self._genesis_values:
            outputs = []
            for owner, value in self._genesis_values:
                wallet = self.actors[owner].zcash
                note = Note(wallet.address, value, rng_bytes(self.rng, 32))
                epk = self.directory.new_ephemeral(self.rng)
                ct = encrypt_note(note, wallet.address,
                                  self.directory.secret_for(epk, wallet.address), epk)
                outputs.append(OutputDescription(commit_note(note), ct, note))
                wallet.credit(note)
            tx = ShieldedTx((), tuple(outputs), 0)
            result = self.zcash.submit_shielded_tx(tx, allow_unbacked=True)
            if isinstance(result, Rejection):
                raise ProtocolError(f"seed tx rejected: {result.reason}")
            header = self.zcash.mine_block()
            self.relay.submit_header(header)

    # -- clock -------------------------------------------------------------------

    def tick(self, actor_phase=None) -> list[tuple]:
        """Advance one tick: mine per schedule, relay headers, let actors
        move, then fire every due deadline exactly once."""
        if not self._started:
            self.start()
        self.now += 1
        if self.config.zc_block_interval and self.now % self.config.zc_block_interval == 0:
            header = self.zcash.mine_block()
            if not self.relayer_muted:
                self.relay.submit_header(header)
        if actor_phase is not None:
            actor_phase(self)
        events = self._enforce_deadlines()
        for vault_id in self.registry.vaults:
            event = self.registry.check_liquidation(vault_id, self.now)
            if event is not None:
                self.metrics.liquidation_count += 1
                self.metrics.record(self.now, "liquidation", vault_id, event.seized)
                self._trace(vault_id, "liquidation", "", "", "", OK)
                events.append((self.now, "liquidation", vault_id))
        self.metrics.supply_series.append((self.now, self.issuing.supply))
        return events

    def run_until(self, tick: int, actor_phase=None) -> None:
        while self.now < tick:
            self.tick(actor_phase)

    # -- trace -------------------------------------------------------------------

    def _trace(self, actor: str, op: str, request_id: str, before: str,
               after: str, outcome: str) -> None:
        self.trace.append((self.now, actor, op, request_id, before, after, outcome))

    def trace_rows(self) -> list[tuple]:
        return list(self.trace)

    def _reject(self, actor, op, request_id, state, reason) -> Rejection:
        self._trace(actor, op, request_id, state, state, f"rejected:{reason}")
        if "replay" in reason:
            self.metrics.replay_rejections += 1
        return Rejection(reason)

    # -- vault ops -----------------------------------------------------------------

    def register_vault(self, vault_id: str, collateral: int):
        account = self.actors.get(vault_id)
        if account is None:
            return self._reject(vault_id, "registerVault", "", "", "unknown-actor")
        result = self.registry.register_vault(vault_id, collateral, account.zcash.address)
        if isinstance(result, Rejection):
            return self._reject(vault_id, "registerVault", "", "", result.reason)
        self._trace(vault_id, "registerVault", "", "", "VaultRegistered", OK)
        return result

    def submit_poc(self, vault_id: str, claimed_obligations: Optional[int] = None):
        before = self._vault_state(vault_id)
        result = self.registry.submit_poc(vault_id, self.now, claimed_obligations)
        if isinstance(result, Rejection):
            return self._reject(vault_id, "submitPOC", "", before, result.reason)
        self._trace(vault_id, "submitPOC", "", before, self._vault_state(vault_id), OK)
        return result

    def submit_pob(self, vault_id: str, witness_history=None):
        before = self._vault_state(vault_id)
        result = self.registry.submit_pob(vault_id, self.now, witness_history)
        if isinstance(result, Rejection):
            return self._reject(vault_id, "submitPOB", "", before, result.reason)
        self._trace(vault_id, "submitPOB", "", before, self._vault_state(vault_id), OK)
        return result

    def submit_poi(self, vault_id: str):
        before = "NotRedeeming" if not self.registry.redeem_available(vault_id) else "RedeemStart"
        result = self.registry.submit_poi(vault_id, self.now)
        if isinstance(result, Rejection):
            return self._reject(vault_id, "submitPOI", "", before, result.reason)
        self._trace(vault_id, "submitPOI", "", before, "NotRedeeming", OK)
        return result

    def _vault_state(self, vault_id: str) -> str:
        record = self.registry.vaults.get(vault_id)
        return record.issue_state if record else ""

    # -- issue ---------------------------------------------------------------------

    def request_lock(self, issuer: str, vault_id: str):
        """Commit step: warranty locked, permit granted, mint clock started."""
        if not self.registry.issue_available(vault_id, self.now):
            return self._reject(issuer, "requestLock", "", ISSUE_START, "vault-unavailable")
        record = self.registry.record(vault_id)
        if record.active_issue is not None:
            return self._reject(issuer, "requestLock", "", ISSUE_START, "vault-busy")
        request_id = self._next_id("request", "R")
        rej = self.issuing.i_ledger.lock_warranty(request_id, issuer,
                                                  self.config.params.i_w)
        if rej is not None:
            return self._reject(issuer, "requestLock", "", ISSUE_START, rej.reason)
        permit = LockPermit(self._next_id("permit", "P"), issuer, vault_id,
                            rng_bytes(self.rng, 32), self.now + self.config.delta_mint)
        self.permits[permit.permit_id] = permit
        request = RequestRecord(request_id, "issue", AWAITING_MINT, issuer, vault_id,
                                permit=permit,
                                deadline_mint=self.now + self.config.delta_mint)
        self.requests[request_id] = request
        record.active_issue = request_id
        self._trace(issuer, "requestLock", request_id, ISSUE_START, AWAITING_MINT, OK)
        return request

    def do_lock(self, issuer: str, request_id: str, amount: int,
                tamper_random_rcm: bool = False):
        """Shielded lock on the backing chain, trapdoor derived from the
        permit nonce (unless deliberately tampered)."""
        request = self.requests.get(request_id)
        if request is None or request.kind != "issue" or request.requester != issuer:
            return self._reject(issuer, "lock", request_id or "", "", "no-such-request")
        if request.terminal or request.state != AWAITING_MINT:
            return self._reject(issuer, "lock", request_id, request.state, "bad-state")
        permit = request.permit
        if permit.used:
            return self._reject(issuer, "lock", request_id, request.state, "permit-used")
        rcm = rng_bytes(self.rng, 32) if tamper_random_rcm else derive_rcm(permit.nonce)
        vault_addr = self.registry.record(request.vault_id).zcash_address
        wallet = self.actors[issuer].zcash
        try:
            tx, notes = build_transfer(wallet, [(vault_addr, amount, rcm)],
                                       self.zcash.fee, self.directory, self.rng)
        except Exception as exc:
            return self._reject(issuer, "lock", request_id, request.state, str(exc))
        result = self.zcash.submit_shielded_tx(tx)
        if isinstance(result, Rejection):
            return self._reject(issuer, "lock", request_id, request.state, result.reason)
        wallet.mark_spent([s.witness.note for s in tx.spends])
        if len(notes) > 1:
            wallet.expect(notes[-1])  # change
        lock_note = notes[0]
        permit.used = True
        request.lock_cm = commit_note(lock_note).digest
        self._lock_witness[request_id] = lock_note
        self._watched_locks[request.lock_cm] = amount
        self._trace(issuer, "lock", request_id, AWAITING_MINT, AWAITING_MINT, OK)
        return result

    def build_mint(self, request_id: str, wrong_relation: bool = False,
                   lock_note_override: Optional[Note] = None,
                   nonce_override: Optional[bytes] = None) -> MintTransfer:
        """Honest mint transfer for a locked request (tamper knobs for
        byzantine issuers)."""
        request = self.requests[request_id]
        lock_note = lock_note_override or self._lock_witness.get(request_id)
        if lock_note is None:
            raise ProtocolError(f"no lock recorded for {request_id}")
        lock_cm = commit_note(lock_note)
        block_hash = self._cm_block.get(lock_cm.digest)
        if block_hash is None:
            raise ProtocolError("lock not mined yet")
        path = self.zcash.merkle_path(lock_cm, block_hash)
        if isinstance(path, Rejection):
            raise ProtocolError(f"no path: {path.reason}")
        value = post_fee_amount(lock_note.value, self.config.params.f)
        if wrong_relation:
            value += 1
        issuer_wallet = self.actors[request.requester].wzec
        wzec_note = Note(issuer_wallet.address, value, rng_bytes(self.rng, 32))
        statement = MintStatement(lock_cm, commit_note(wzec_note),
                                  request.permit.permit_id, block_hash, path)
        nonce = nonce_override if nonce_override is not None else request.permit.nonce
        return MintTransfer(statement, MintWitness(lock_note, wzec_note, nonce))

    def build_note_ciphertext(self, note: Note, vault_id: str,
                              wrong_note: bool = False,
                              corrupt: bool = False) -> NoteCiphertext:
        """C^V construction; byzantine variants encrypt a different note or
        flip a byte after encryption."""
        vault_addr = self.registry.record(vault_id).zcash_address
        payload_note = note
        if wrong_note:
            payload_note = Note(note.address, note.value + 1, rng_bytes(self.rng, 32))
        epk = self.directory.new_ephemeral(self.rng)
        secret = self.directory.secret_for(epk, vault_addr)
        ct = encrypt_note(payload_note, vault_addr, secret, epk)
        if corrupt:
            broken = bytearray(ct.payload)
            broken[0] ^= 0xFF
            ct = NoteCiphertext(bytes(broken), ct.ephemeral_public)
        return ct

    def do_mint(self, issuer: str, request_id: str, transfer: MintTransfer,
                ciphertext: NoteCiphertext):
        request = self.requests.get(request_id)
        if request is None or request.requester != issuer or request.kind != "issue":
            return self._reject(issuer, "mint", request_id or "", "", "no-such-request")
        if request.terminal or request.state != AWAITING_MINT:
            return self._reject(issuer, "mint", request_id, request.state, "bad-state")
        if self.now > request.deadline_mint:
            return self._reject(issuer, "mint", request_id, request.state,
                                "deadline-passed")
        deadline = self.now + self.config.delta_confirm_issue
        result = self.issuing.submit_mint_tx(transfer, deadline, request_id,
                                             request.permit.nonce)
        if isinstance(result, Rejection):
            reason = result.reason
            if "replayed" in reason:
                reason = f"replay:{reason}"
            return self._reject(issuer, "mint", request_id, request.state, reason)
        # ground truth check: a relay fooled by withheld headers is a
        # detected safety violation, not a silent success
        if not self._on_true_chain(transfer.statement.lock_cm.digest,
                                   transfer.statement.inclusion_block):
            self.metrics.relay_violations += 1
            self.metrics.record(self.now, "relay-violation", request_id)
        request.state = AWAIT_ISSUE_CONFIRM
        request.deadline_confirm = deadline
        request.pending_txid = result.txid
        request.ciphertext = ciphertext
        self._mint_transfers[request_id] = transfer
        self._trace(issuer, "mint", request_id, AWAITING_MINT, AWAIT_ISSUE_CONFIRM, OK)
        return result

    def _on_true_chain(self, cm_digest: bytes, block_hash: bytes) -> bool:
        return self.zcash.block_on_main(block_hash) and cm_digest in self.zcash.pool.leaf_index

    def confirm_issue(self, vault_id: str, request_id: str):
        request = self.requests.get(request_id)
        if request is None or request.vault_id != vault_id or request.kind != "issue":
            return self._reject(vault_id, "confirmIssue", request_id or "", "",
                                "no-such-request")
        if request.terminal or request.state != AWAIT_ISSUE_CONFIRM:
            return self._reject(vault_id, "confirmIssue", request_id, request.state,
                                "bad-state")
        if self.now > request.deadline_confirm:
            return self._reject(vault_id, "confirmIssue", request_id, request.state,
                                "deadline-passed")
        self._complete_issue(request, slash_vault=False)
        self._trace(vault_id, "confirmIssue", request_id, AWAIT_ISSUE_CONFIRM,
                    ISSUE_SUCCESS, OK)
        return OK

    def _complete_issue(self, request: RequestRecord, slash_vault: bool) -> None:
        transfer = self._mint_transfers[request.request_id]
        wzec_note = self.issuing.finalize_tx(request.pending_txid, CONFIRMED)
        self.actors[request.requester].wzec.credit(wzec_note)
        lock_note = transfer.witness.lock_note
        self.registry.note_issue_completed(request.vault_id, lock_note.value)
        vault_account = self.actors.get(request.vault_id)
        if vault_account is not None and self._vault_can_decrypt(request):
            vault_account.zcash.credit(lock_note)
        self.issuing.i_ledger.return_warranty(request.request_id)
        if slash_vault:
            taken = self.issuing.i_ledger.slash_collateral(
                request.vault_id, self.config.params.i_w, request.requester)
            self.metrics.slash_count += 1
            self.metrics.record(self.now, "slash", request.vault_id,
                                request.requester, taken, "confirm-issue-timeout")
        request.state = ISSUE_SUCCESS
        request.terminal = True
        request.close_reason = "confirmed"
        self.registry.record(request.vault_id).active_issue = None

    def _vault_can_decrypt(self, request: RequestRecord) -> bool:
        vault_addr = self.registry.record(request.vault_id).zcash_address
        secret = self.directory.secret_for(request.ciphertext.ephemeral_public,
                                           vault_addr)
        note = decrypt_note(request.ciphertext, secret)
        claimed = self._mint_transfers[request.request_id].statement.lock_cm
        return note is not None and commit_note(note) == claimed

    def challenge_issue(self, vault_id: str, request_id: str,
                        revealed: Optional[SharedSecret] = None):
        request = self.requests.get(request_id)
        if request is None or request.vault_id != vault_id or request.kind != "issue":
            return self._reject(vault_id, "challengeIssue", request_id or "", "",
                                "no-such-request")
        if request.terminal or request.state != AWAIT_ISSUE_CONFIRM:
            return self._reject(vault_id, "challengeIssue", request_id, request.state,
                                "bad-state")
        if self.now > request.deadline_confirm:
            return self._reject(vault_id, "challengeIssue", request_id, request.state,
                                "deadline-passed")
        vault_addr = self.registry.record(vault_id).zcash_address
        if revealed is None:
            revealed = self.directory.secret_for(request.ciphertext.ephemeral_public,
                                                 vault_addr)
        claimed = self._mint_transfers[request_id].statement.lock_cm
        verdict = verify_challenge(request.ciphertext, revealed, claimed,
                                   self.directory, vault_addr)
        if verdict != CHALLENGE_UPHELD:
            self.metrics.challenge_rejected += 1
            return self._reject(vault_id, "challengeIssue", request_id, request.state,
                                "challenge-not-upheld")
        self.issuing.finalize_tx(request.pending_txid, VOIDED)
        # the issuer forfeits both the warranty and the locked coins
        forfeited = self.issuing.i_ledger.forfeit_warranty(request_id, vault_id)
        self.metrics.slash_count += 1
        self.metrics.record(self.now, "slash", request.requester, vault_id,
                            forfeited, "issue-challenge")
        lock_note = self._lock_witness.get(request_id)
        vault_account = self.actors.get(vault_id)
        if lock_note is not None and vault_account is not None:
            vault_account.zcash.credit(lock_note)
        self.metrics.challenge_upheld += 1
        self.metrics.record(self.now, "challenge", request_id, "upheld")
        request.state = ISSUE_CHALLENGED
        request.terminal = True
        request.close_reason = "challenged"
        self.registry.record(vault_id).active_issue = None
        self._trace(vault_id, "challengeIssue", request_id, AWAIT_ISSUE_CONFIRM,
                    ISSUE_CHALLENGED, OK)
        return OK

    # -- redeem --------------------------------------------------------------------

    def build_burn(self, redeemer: str, vault_id: str, amount: int,
                   reuse_note: Optional[Note] = None, ct_wrong_note: bool = False,
                   ct_corrupt: bool = False) -> tuple[BurnTransfer, Note]:
        """Honest burn transfer: fresh release note to the redeemer's own
        backing-chain address. `reuse_note` deliberately reuses an earlier
        release note's values (the documented replay carve-out); the ct_*
        knobs publish a malformed ciphertext."""
        account = self.actors[redeemer]
        if reuse_note is not None:
            release_note = reuse_note
        else:
            release_note = Note(account.zcash.address,
                                post_fee_amount(amount, self.config.params.f),
                                rng_bytes(self.rng, 32))
        spend_tx, notes = build_transfer(account.wzec, [], amount, self.directory,
                                         self.rng)
        ct = self.build_note_ciphertext(release_note, vault_id,
                                        wrong_note=ct_wrong_note, corrupt=ct_corrupt)
        statement = BurnStatement(commit_note(release_note), ct)
        return BurnTransfer(statement, BurnWitness(release_note, amount, spend_tx)), release_note

    def do_burn(self, redeemer: str, vault_id: str, transfer: BurnTransfer,
                ciphertext: Optional[NoteCiphertext] = None):
        if vault_id not in self.registry.vaults:
            return self._reject(redeemer, "burn", "", REDEEM_START, "unknown-vault")
        if not self.registry.redeem_available(vault_id):
            return self._reject(redeemer, "burn", "", REDEEM_START, "vault-exempt")
        record = self.registry.record(vault_id)
        if record.active_redeem is not None:
            return self._reject(redeemer, "burn", "", REDEEM_START, "vault-busy")
        request_id = self._next_id("request", "R")
        rej = self.issuing.i_ledger.lock_warranty(request_id, redeemer,
                                                  self.config.params.i_w)
        if rej is not None:
            return self._reject(redeemer, "burn", "", REDEEM_START, rej.reason)
        deadline = self.now + self.config.delta_confirm_redeem
        result = self.issuing.submit_burn_tx(transfer, deadline, request_id)
        if isinstance(result, Rejection):
            self.issuing.i_ledger.return_warranty(request_id)
            return self._reject(redeemer, "burn", "", REDEEM_START, result.reason)
        wallet = self.actors[redeemer].wzec
        wallet.mark_spent([s.witness.note for s in transfer.witness.spend_tx.spends])
        for out in transfer.witness.spend_tx.outputs:
            wallet.credit(out.note_witness)  # change is immediately live
        request = RequestRecord(request_id, "redeem", AWAIT_REDEEM_CONFIRM, redeemer,
                                vault_id,
                                release_cm=transfer.statement.release_cm.digest,
                                ciphertext=ciphertext or transfer.statement.ciphertext,
                                deadline_confirm=deadline,
                                pending_txid=result.txid)
        self.requests[request_id] = request
        self._burn_transfers[request_id] = transfer
        record.active_redeem = request_id
        self.actors[redeemer].zcash.expect(transfer.witness.release_note)
        self._trace(redeemer, "burn", request_id, REDEEM_START, AWAIT_REDEEM_CONFIRM, OK)
        return request

    def do_release(self, vault_id: str, request_id: str,
                   note_override: Optional[Note] = None):
        """Vault creates the redeemer-specified note on the backing chain."""
        request = self.requests.get(request_id)
        if request is None or request.kind != "redeem":
            raise ProtocolError(f"release without a pending burn: {request_id}")
        if request.vault_id != vault_id:
            return self._reject(vault_id, "release", request_id, request.state,
                                "wrong-vault")
        if request.terminal or request.state != AWAIT_REDEEM_CONFIRM:
            return self._reject(vault_id, "release", request_id, request.state,
                                "bad-state")
        if request.released:
            return self._reject(vault_id, "release", request_id, request.state,
                                "already-released")
        if self.now > request.deadline_confirm:
            return self._reject(vault_id, "release", request_id, request.state,
                                "deadline-passed")
        note = note_override
        if note is None:
            note = self._decrypt_release_note(request)
            if note is None:
                return self._reject(vault_id, "release", request_id, request.state,
                                    "cannot-decrypt")
        wallet = self.actors[vault_id].zcash
        try:
            tx, notes = build_transfer(wallet, [(note.address, note.value, note.rcm)],
                                       self.zcash.fee, self.directory, self.rng)
        except Exception as exc:
            return self._reject(vault_id, "release", request_id, request.state, str(exc))
        result = self.zcash.submit_shielded_tx(tx)
        if isinstance(result, Rejection):
            return self._reject(vault_id, "release", request_id, request.state,
                                result.reason)
        wallet.mark_spent([s.witness.note for s in tx.spends])
        if len(notes) > 1:
            wallet.expect(notes[-1])
        request.released = True
        self._watched_releases[commit_note(note).digest] = note.value
        self._trace(vault_id, "release", request_id, AWAIT_REDEEM_CONFIRM,
                    AWAIT_REDEEM_CONFIRM, OK)
        return result

    def _decrypt_release_note(self, request: RequestRecord) -> Optional[Note]:
        from .notes import decrypt_note
        vault_addr = self.registry.record(request.vault_id).zcash_address
        secret = self.directory.secret_for(request.ciphertext.ephemeral_public,
                                           vault_addr)
        note = decrypt_note(request.ciphertext, secret)
        if note is None or commit_note(note).digest != request.release_cm:
            return None
        return note

    def confirm_redeem(self, vault_id: str, request_id: str,
                       proof: Optional[tuple] = None):
        """Inclusion proof of the release note confirms the burn."""
        request = self.requests.get(request_id)
        if request is None or request.vault_id != vault_id or request.kind != "redeem":
            return self._reject(vault_id, "confirmRedeem", request_id or "", "",
                                "no-such-request")
        if request.terminal or request.state != AWAIT_REDEEM_CONFIRM:
            return self._reject(vault_id, "confirmRedeem", request_id, request.state,
                                "bad-state")
        if self.now > request.deadline_confirm:
            return self._reject(vault_id, "confirmRedeem", request_id, request.state,
                                "deadline-passed")
        release_cm = NoteCommitment(request.release_cm)
        if proof is None:
            block_hash = self._cm_block.get(request.release_cm)
            if block_hash is None:
                return self._reject(vault_id, "confirmRedeem", request_id,
                                    request.state, "release-not-mined")
            path = self.zcash.merkle_path(release_cm, block_hash)
            if isinstance(path, Rejection):
                return self._reject(vault_id, "confirmRedeem", request_id,
                                    request.state, path.reason)
            proof = (path, block_hash)
        path, block_hash = proof
        verdict = self.relay.verify_note_inclusion(release_cm, path, block_hash)
        if isinstance(verdict, Rejection):
            return self._reject(vault_id, "confirmRedeem", request_id, request.state,
                                verdict.reason)
        transfer = self._burn_transfers[request_id]
        self.issuing.finalize_tx(request.pending_txid, CONFIRMED)
        self.registry.note_redeem_completed(vault_id, transfer.witness.burn_amount)
        self.issuing.i_ledger.return_warranty(request_id)
        request.state = REDEEM_SUCCESS
        request.terminal = True
        request.close_reason = "confirmed"
        self.registry.record(vault_id).active_redeem = None
        self._trace(vault_id, "confirmRedeem", request_id, AWAIT_REDEEM_CONFIRM,
                    REDEEM_SUCCESS, OK)
        return OK

    def challenge_redeem(self, vault_id: str, request_id: str,
                         revealed: Optional[SharedSecret] = None):
        request = self.requests.get(request_id)
        if request is None or request.vault_id != vault_id or request.kind != "redeem":
            return self._reject(vault_id, "challengeRedeem", request_id or "", "",
                                "no-such-request")
        if request.terminal or request.state != AWAIT_REDEEM_CONFIRM:
            return self._reject(vault_id, "challengeRedeem", request_id, request.state,
                                "bad-state")
        if request.released:
            return self._reject(vault_id, "challengeRedeem", request_id, request.state,
                                "already-released")
        if self.now > request.deadline_confirm:
            return self._reject(vault_id, "challengeRedeem", request_id, request.state,
                                "deadline-passed")
        vault_addr = self.registry.record(vault_id).zcash_address
        if revealed is None:
            revealed = self.directory.secret_for(request.ciphertext.ephemeral_public,
                                                 vault_addr)
        verdict = verify_challenge(request.ciphertext, revealed,
                                   NoteCommitment(request.release_cm),
                                   self.directory, vault_addr)
        if verdict != CHALLENGE_UPHELD:
            self.metrics.challenge_rejected += 1
            return self._reject(vault_id, "challengeRedeem", request_id, request.state,
                                "challenge-not-upheld")
        refund = self.issuing.finalize_tx(request.pending_txid, VOIDED)
        if refund is not None:
            self.actors[request.requester].wzec.credit(refund)
        forfeited = self.issuing.i_ledger.forfeit_warranty(request_id, vault_id)
        self.metrics.slash_count += 1
        self.metrics.record(self.now, "slash", request.requester, vault_id,
                            forfeited, "redeem-challenge")
        self.metrics.challenge_upheld += 1
        self.metrics.record(self.now, "challenge", request_id, "upheld")
        request.state = REDEEM_CHALLENGED
        request.terminal = True
        request.close_reason = "challenged"
        self.registry.record(vault_id).active_redeem = None
        self._trace(vault_id, "challengeRedeem", request_id, AWAIT_REDEEM_CONFIRM,
                    REDEEM_CHALLENGED, OK)
        return OK

    # -- deadlines -------------------------------------------------------------------

    def _enforce_deadlines(self) -> list[tuple]:
        events = []
        for request in list(self.requests.values()):
            if request.terminal:
                continue
            if (request.kind == "issue" and request.state == AWAITING_MINT
                    and self.now > request.deadline_mint):
                forfeited = self.issuing.i_ledger.forfeit_warranty(
                    request.request_id, request.vault_id)
                self.metrics.slash_count += 1
                self.metrics.record(self.now, "slash", request.requester,
                                    request.vault_id, forfeited, "mint-timeout")
                request.terminal = True
                request.close_reason = "mint-timeout"
                self.registry.record(request.vault_id).active_issue = None
                self._trace("system", "mintTimeout", request.request_id,
                            AWAITING_MINT, AWAITING_MINT, OK)
                events.append((self.now, "mint-timeout", request.request_id))
            elif (request.kind == "issue" and request.state == AWAIT_ISSUE_CONFIRM
                    and self.now > request.deadline_confirm):
                self._complete_issue(request, slash_vault=True)
                self._trace("system", "confirmIssueTimeout", request.request_id,
                            AWAIT_ISSUE_CONFIRM, ISSUE_SUCCESS, OK)
                events.append((self.now, "confirm-issue-timeout", request.request_id))
            elif (request.kind == "redeem" and request.state == AWAIT_REDEEM_CONFIRM
                    and self.now > request.deadline_confirm):
                refund = self.issuing.finalize_tx(request.pending_txid, VOIDED)
                if refund is not None:
                    self.actors[request.requester].wzec.credit(refund)
                taken = self.issuing.i_ledger.slash_collateral(
                    request.vault_id, self.config.params.i_w, request.requester)
                self.issuing.i_ledger.return_warranty(request.request_id)
                self.metrics.slash_count += 1
                self.metrics.record(self.now, "slash", request.vault_id,
                                    request.requester, taken, "confirm-redeem-timeout")
                request.terminal = True
                request.close_reason = "redeem-timeout"
                self.registry.record(request.vault_id).active_redeem = None
                self._trace("system", "confirmRedeemTimeout", request.request_id,
                            AWAIT_REDEEM_CONFIRM, AWAIT_REDEEM_CONFIRM, OK)
                events.append((self.now, "confirm-redeem-timeout", request.request_id))
        return events

    # -- scanning and metrics ----------------------------------------------------------

    def _scan_block(self, block) -> None:
        for tx in block.txs:
            for out in tx.outputs:
                self._cm_block[out.cm.digest] = block.header.hash
                for account in self.actors.values():
                    account.zcash.observe_commitment(out.cm)
                if out.cm.digest in self._watched_locks:
                    self.metrics.zec_locked_total += self._watched_locks.pop(out.cm.digest)
                if out.cm.digest in self._watched_releases:
                    self.metrics.zec_released_total += self._watched_releases.pop(
                        out.cm.digest)

    def check_inclusion_claim(self, cm, path, block_hash: bytes) -> str:
        """Adversary-facing surface: present an inclusion proof to the
        relay. A proof the relay accepts that the true chain contradicts is
        flagged as a safety violation."""
        verdict = self.relay.verify_note_inclusion(cm, path, block_hash)
        if not isinstance(verdict, Rejection):
            if not self._on_true_chain(cm.digest, block_hash):
                self.metrics.relay_violations += 1
                self.metrics.record(self.now, "relay-violation", "inclusion-forgery")
            return "verified"
        return f"rejected:{verdict.reason}"

    # -- helpers -------------------------------------------------------------------------

    def _next_id(self, kind: str, prefix: str) -> str:
        self._counter[kind] += 1
        return f"{prefix}{self._counter[kind]}"

    def total_i(self) -> int:
        return self.issuing.i_ledger.total()


# --- trace conformance -----------------------------------------------------------

# Legal operation sequences per request, read off the Issue and Redeem
# control flow: a mint is confirmed, challenged or auto-confirmed on
# timeout, never more than one of them; a burn is challenged, confirmed, or
# voided on timeout. A confirm without a preceding release is legal exactly
# when an identical note commitment is already provably on chain, which is
# the documented proof-reuse carve-out for redeemers who repeat note values.
ISSUE_SEQUENCE = re.compile(
    r"^requestLock(,lock)?"
    r",(mint,(confirmIssue|challengeIssue|confirmIssueTimeout)|mintTimeout)$"
)
REDEEM_SEQUENCE = re.compile(
    r"^burn,(challengeRedeem|(release,)?(confirmRedeem|confirmRedeemTimeout))$"
)

REQUEST_OPS = {
    "requestLock", "lock", "mint", "confirmIssue", "challengeIssue",
    "mintTimeout", "burn", "release", "confirmRedeem", "challengeRedeem",
    "confirmIssueTimeout", "confirmRedeemTimeout",
}


def ops_by_request(trace_rows: list[tuple]) -> dict[str, list[str]]:
    """Successful request operations grouped per request, in trace order."""
    grouped: dict[str, list[str]] = {}
    for _tick, _actor, op, request_id, _before, _after, outcome in trace_rows:
        if outcome == OK and op in REQUEST_OPS and request_id:
            grouped.setdefault(request_id, []).append(op)
    return grouped


def conformance_errors(engine: Engine) -> list[str]:
    """Check a finished engine run against the trace grammars plus the
    exactly-one-terminal rule for every pending transaction."""
    errors = []
    grouped = ops_by_request(engine.trace_rows())
    for request_id, request in engine.requests.items():
        ops = ",".join(grouped.get(request_id, []))
        grammar = ISSUE_SEQUENCE if request.kind == "issue" else REDEEM_SEQUENCE
        if not request.terminal:
            errors.append(f"{request_id}: not terminal at end of run ({ops})")
        elif not grammar.fullmatch(ops):
            errors.append(f"{request_id}: sequence [{ops}] violates the grammar")
    for txid, pending in engine.issuing.pending.items():
        if pending.status == PENDING:
            errors.append(f"{txid}: pending tx never reached a terminal state")
    return errors
