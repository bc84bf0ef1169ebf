"""Command-line protocol client: one authenticated session, one command.

Credentials come from the environment (EVHUB_ACCOUNT / EVHUB_PASSWORD) or
from a JSON credentials file, never from argv. The raw response frame is
printed to stdout verbatim.

Exit codes: 0 result=ok, 1 transport or credential-plumbing trouble,
2 protocol-level error (result=error, including failed authentication).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

from ..model import Action, Command
from ..transports import open_stream
from ..wire import DecodeError, decode_response, encode_command

DEFAULT_GATEWAY = "tcp://127.0.0.1:7002"


def load_credentials(args) -> tuple[str, str]:
    """Account and password from --credentials file or the environment."""
    if args.credentials:
        with open(args.credentials, encoding="utf-8") as handle:
            doc = json.load(handle)
        return doc["account"], doc["password"]
    account = args.account or os.environ.get("EVHUB_ACCOUNT")
    password = os.environ.get("EVHUB_PASSWORD")
    if not account or password is None:
        raise SystemExit(
            "evhctl: set EVHUB_ACCOUNT and EVHUB_PASSWORD (or pass --credentials FILE)")
    return account, password


def build_command(args) -> Command:
    if args.subcommand == "subscribe":
        return Command(Action.SUBSCRIBE, phone=args.phone, fcm_id=args.token, event=args.event)
    if args.subcommand == "unsubscribe":
        return Command(Action.UNSUBSCRIBE, phone=args.phone, event=args.event)
    if args.subcommand == "add-subscriber":
        return Command(Action.ADD_SUBSCRIBER, phone=args.phone, fcm_id=args.token, event=args.event)
    if args.subcommand == "del-subscriber":
        return Command(Action.DEL_SUBSCRIBER, phone=args.phone, event=args.event)
    if args.subcommand == "get-subscribers":
        return Command(Action.GET_SUBSCRIBER_LIST, event=args.event)
    if args.subcommand == "change-password":
        new_password = os.environ.get(args.new_password_env)
        if new_password is None:
            raise SystemExit(f"evhctl: set {args.new_password_env} to the new password")
        return Command(Action.CHANGE_PASSWORD, account=args.target_account,
                       new_password=new_password)
    if args.subcommand == "update":
        return Command(Action.UPDATE)
    raise SystemExit(f"evhctl: unknown subcommand {args.subcommand!r}")


async def run_command(args, account: str, password: str, cmd: Command) -> tuple[bytes, bool]:
    """Open a session, authenticate, send the command. Returns the raw
    response frame and whether result=ok."""
    stream = await open_stream(args.gateway, cafile=args.cafile, insecure=args.insecure)
    try:
        init = Command(Action.SESSION_INITIATION, account=account, password=password)
        await stream.write_frame(encode_command(init))
        raw = await asyncio.wait_for(stream.read_frame(), 10.0)
        if raw is None:
            raise ConnectionError("gateway closed the connection during authentication")
        init_resp = decode_response(raw)
        if not init_resp.is_ok:
            return raw, False
        await stream.write_frame(encode_command(cmd))
        raw = await asyncio.wait_for(stream.read_frame(), 10.0)
        if raw is None:
            raise ConnectionError("gateway closed the connection before responding")
        return raw, decode_response(raw).is_ok
    finally:
        await stream.close()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="evhctl", description="Send one command to an event gateway.")
    parser.add_argument("--gateway", default=DEFAULT_GATEWAY,
                        help=f"gateway URL: tcp://, tls://, unix://, ws:// (default {DEFAULT_GATEWAY})")
    parser.add_argument("--account", help="account name (default $EVHUB_ACCOUNT)")
    parser.add_argument("--credentials",
                        help='JSON file with {"account": ..., "password": ...}')
    parser.add_argument("--cafile", help="CA bundle for tls:// gateways")
    parser.add_argument("--insecure", action="store_true",
                        help="skip certificate verification for tls:// gateways")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def with_event(p):
        p.add_argument("--event", required=True, help="event (channel) name")
        return p

    def with_phone(p):
        p.add_argument("--phone", required=True, help="subscriber phone, E.164 (+84...)")
        return p

    p = with_phone(with_event(sub.add_parser("subscribe", help="subscribe a phone to an event")))
    p.add_argument("--token", required=True, help="push token (FCM id)")
    with_phone(with_event(sub.add_parser("unsubscribe", help="remove a subscription")))
    p = with_phone(with_event(sub.add_parser("add-subscriber", help="admin: add a subscriber")))
    p.add_argument("--token", required=True, help="push token (FCM id)")
    with_phone(with_event(sub.add_parser("del-subscriber", help="admin: delete a subscriber")))
    with_event(sub.add_parser("get-subscribers", help="admin: list an event's subscribers"))
    p = sub.add_parser("change-password", help="admin: change an account's password")
    p.add_argument("--target-account", required=True, help="account to change")
    p.add_argument("--new-password-env", default="EVHUB_NEW_PASSWORD",
                   help="environment variable holding the new password")
    sub.add_parser("update", help="query channel status and gateway metrics")

    args = parser.parse_args(argv)

    try:
        account, password = load_credentials(args)
        cmd = build_command(args)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"evhctl: bad credentials file: {exc}", file=sys.stderr)
        return 1

    try:
        raw, ok = asyncio.run(run_command(args, account, password, cmd))
    except (ConnectionError, OSError, asyncio.TimeoutError) as exc:
        print(f"evhctl: cannot talk to gateway {args.gateway}: {exc}", file=sys.stderr)
        return 1
    except DecodeError as exc:
        print(f"evhctl: gateway sent an invalid response: {exc}", file=sys.stderr)
        return 1

    sys.stdout.buffer.write(raw + b"\n")
    sys.stdout.buffer.flush()
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
