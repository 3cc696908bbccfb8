import argparse
import os
from dataclasses import MISSING
from dataclasses import dataclass
from dataclasses import fields
from typing import ClassVar
from typing import Literal
from typing import Optional
from typing import Union
from typing import get_args
from typing import get_origin

from ruamel import yaml

from sasaki.utils import log

__all__ = [
    "ConfigABC",
    "CommandParser",
]


def _resolve_type(tp) -> tuple:
    """(base type, list item type or None, choices or None, optional) of a field annotation."""
    optional = False
    if get_origin(tp) is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        optional = len(args) < len(get_args(tp))
        assert len(args) == 1, f"Only Optional[...] unions are supported, got {tp}"
        tp = args[0]
    origin = get_origin(tp)
    if origin is Literal:
        return str, None, get_args(tp), optional
    if origin in (list, tuple):
        item = get_args(tp)[0] if get_args(tp) else str
        return list, item, None, optional
    return tp, None, None, optional


@dataclass
class ConfigABC:
    """Abstract base class for configuration dataclasses."""

    _registry: ClassVar[dict] = {}
    help_dict: ClassVar[dict] = {}
    identifier: str = None

    @staticmethod
    def get_identifier(cls):
        return ".".join([cls.__module__, cls.__qualname__])

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        identifier = ConfigABC.get_identifier(cls)
        if identifier in ConfigABC._registry:
            return
        ConfigABC._registry[identifier] = cls

    def __post_init__(self):
        self.identifier = ConfigABC.get_identifier(self.__class__)

    @staticmethod
    def get(identifier: str):
        return ConfigABC._registry[identifier]

    def as_dict(self) -> dict:
        result = dict()
        for field in fields(self):
            value = getattr(self, field.name)
            if isinstance(value, tuple):  # yaml has no tuples
                value = list(value)
            if value is not None and not isinstance(value, (int, float, str, bool, list)):
                raise TypeError(f"Unsupported type {type(value).__qualname__} for field {field.name}")
            result[field.name] = value
        return result

    @staticmethod
    def _load_field_value(field, value):
        if value is None or value is MISSING:
            return None
        base, item, choices, _ = _resolve_type(field.type)
        try:
            if base is list:
                if not isinstance(value, (list, tuple)):
                    value = [value]
                return [item(v) for v in value]
            if choices is not None:
                assert value in choices, f"Value {value} is not in choices {choices} for field {field.name}"
                return value
            if base is bool and isinstance(value, str):
                return value.lower() in ("1", "true", "yes")
            return base(value)
        except (TypeError, ValueError) as e:
            raise TypeError(f"Error when converting field {field.name} to type {field.type}: {e}")

    @classmethod
    def from_dict(cls, config_dict: dict):
        config_dict = dict(config_dict)
        all_fields = fields(cls)
        assert len(all_fields) > 0, "No fields found, did you forget to add @dataclass decorator to your class?"
        kwargs = {}
        for field in all_fields:
            if field.name not in config_dict or field.name == "identifier":
                config_dict.pop(field.name, None)
                continue
            kwargs[field.name] = ConfigABC._load_field_value(field, config_dict.pop(field.name))
        if len(config_dict) > 0:
            log(f"[WARN] Unknown fields {list(config_dict.keys())} are ignored.")
        return cls(**kwargs)  # type: ignore

    def as_yaml(self, yaml_path: str):
        yaml_obj = yaml.YAML()
        yaml_obj.indent(mapping=4, sequence=6, offset=4)
        with open(yaml_path, "w") as file:
            yaml_obj.dump(self.as_dict(), file)

    @classmethod
    def from_yaml(cls, yaml_path: str):
        with open(yaml_path, "r") as file:
            config_dict = yaml.YAML(typ="safe").load(file) or {}
        return cls.from_dict(config_dict)

    class ArgumentParser(argparse.ArgumentParser):
        """Flags generated from the dataclass fields, plus ``--config`` and ``--create-config``."""

        def __init__(self, cls, **kwargs):
            super().__init__(**kwargs)
            self.add_argument(
                "--config",
                type=str,
                metavar="CONFIG_PATH",
                default=None,
                help="Path to a YAML config file; explicit flags override its values.",
            )
            self.add_argument(
                "--create-config",
                action="store_true",
                help="Write a config file with default values to CONFIG_PATH and exit.",
            )
            self._cls = cls
            self._added_arguments_for_cls = False

        def format_help(self) -> str:
            self._add_arguments_for_cls(None)
            return super().format_help()

        @staticmethod
        def _get_default_value(field, cls_obj):
            if cls_obj is not None:
                value = getattr(cls_obj, field.name)
                return value, False
            if field.default is not MISSING and field.default is not None:
                return field.default, False
            if field.default_factory is not MISSING:
                return field.default_factory(), False
            _, _, _, optional = _resolve_type(field.type)
            return None, not optional

        def _add_arguments_for_cls(self, cls_obj=None):
            if self._added_arguments_for_cls:
                return
            self._added_arguments_for_cls = True
            for field in fields(self._cls):
                if field.name == "identifier":
                    continue
                default_value, required = self._get_default_value(field, cls_obj)
                help_str = self._cls.help_dict.get(field.name, "")
                if default_value is not None:
                    help_str = (help_str + " " if help_str else "") + f"Default: {default_value}"
                flag = "--" + field.name.replace("_", "-")
                base, item, choices, _ = _resolve_type(field.type)

                if base is list:
                    self.add_argument(
                        flag, type=item, nargs="+", default=default_value, required=required, help=help_str
                    )
                elif base is bool:
                    if default_value:
                        self.add_argument(
                            f"--no-{field.name.replace('_', '-')}",
                            action="store_false",
                            dest=field.name,
                            help=help_str,
                        )
                    else:
                        self.add_argument(flag, action="store_true", dest=field.name, help=help_str)
                elif base in (int, float, str):
                    self.add_argument(
                        flag,
                        type=base,
                        default=default_value,
                        choices=choices,
                        required=required,
                        help=help_str,
                    )
                else:
                    raise TypeError(f"Unsupported type {base.__qualname__} for field {field.name}")

        def parse_known_args(self, args: list = None, namespace=None):
            args = list(args) if args is not None else None
            pre, _ = argparse.ArgumentParser.parse_known_args(self, args, namespace)
            config_obj = None
            if pre.config is not None and os.path.exists(pre.config) and not pre.create_config:
                config_obj = self._cls.from_yaml(pre.config)

            if pre.create_config:
                if pre.config is None:
                    self.error("Please specify config file path with --config.")
                self._cls().as_yaml(pre.config)
                log(f"[INFO] Wrote default config to {pre.config}")
                self.exit(0)

            self._add_arguments_for_cls(config_obj)
            parsed, unknown = super().parse_known_args(args, namespace)
            parsed = vars(parsed)
            del parsed["config"]
            del parsed["create_config"]
            return self._cls.from_dict(parsed), unknown

    @classmethod
    def get_argparser(cls, **kwargs):
        return ConfigABC.ArgumentParser(cls, **kwargs)


class CommandParser:
    """``prog <command> [flags]``: the first positional argument picks the config class."""

    def __init__(self, commands: dict, prog: Optional[str] = None):
        self._commands = commands
        self._prog = prog or "main.py"

    def usage(self) -> str:
        lines = [f"usage: {self._prog} {{{','.join(self._commands)}}} [flags]", "", "commands:"]
        for name, config_cls in self._commands.items():
            doc = (config_cls.__doc__ or "").strip().splitlines()
            lines.append(f"  {name:<10} {doc[0] if doc else ''}")
        return "\n".join(lines)

    def parse_args(self, argv: list) -> tuple:
        """Returns (command, config). Exits 0 on help and 2 on usage errors, like argparse."""
        if len(argv) == 0 or argv[0] in ("-h", "--help"):
            print(self.usage())
            raise SystemExit(0 if argv else 2)
        command = argv[0]
        if command not in self._commands:
            print(self.usage())
            log(f"[WARN] Unknown command {command!r}")
            raise SystemExit(2)
        parser = self._commands[command].get_argparser(prog=f"{self._prog} {command}")
        return command, parser.parse_args(argv[1:])
