import base64

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ollo.types import (
    Base64Image,
    ChatMessage,
    GenerationOptions,
    ModelTag,
    Role,
    ServerConfig,
)


@pytest.mark.parametrize("text", ["llava", "gemma:2b-instruct-q4_0", "llama2:latest", "library/llama2:7b"])
def test_model_tag_round_trip(text):
    assert str(ModelTag.parse(text)) == text


def test_model_tag_defaults_to_latest():
    tag = ModelTag.parse("llava")
    assert tag.tag == "latest"
    assert tag.canonical == "llava:latest"
    assert tag.same_model("llava:latest")
    assert not tag.same_model("llava:13b")


def test_registry_port_is_not_a_tag():
    tag = ModelTag.parse("localhost:5000/llava")
    assert tag.name == "localhost:5000/llava"
    assert tag.variant is None


names = st.from_regex(r"[a-z][a-z0-9._-]{0,15}", fullmatch=True)


@given(names, st.one_of(st.none(), names))
def test_model_tag_parse_render_property(name, variant):
    rendered = str(ModelTag(name, variant))
    assert str(ModelTag.parse(rendered)) == rendered


def test_options_with_only_seed_has_one_key():
    assert GenerationOptions(seed=42).to_dict() == {"seed": 42}


def test_options_omit_unset_fields():
    assert GenerationOptions().to_dict() == {}
    opts = GenerationOptions(seed=42, temperature=0, extras={"num_ctx": 2048, "stop": "\n"})
    assert opts.to_dict() == {"seed": 42, "temperature": 0.0, "num_ctx": 2048, "stop": "\n"}
    assert None not in opts.to_dict().values()
    assert GenerationOptions.from_dict(opts.to_dict()) == opts
    assert opts.reproducible


@pytest.mark.parametrize("bad", [{"temperature": -0.1}, {"temperature": float("nan")}])
def test_options_reject_negative_temperature(bad):
    with pytest.raises(ValueError):
        GenerationOptions(**bad)


def test_options_reject_non_scalar_extras():
    with pytest.raises(TypeError):
        GenerationOptions(extras={"stop": ["a"]})
    with pytest.raises(ValueError):
        GenerationOptions(extras={"seed": 1})


def test_chat_message_roles():
    assert ChatMessage("system", "x").role is Role.SYSTEM
    with pytest.raises(ValueError):
        ChatMessage("tool", "x")
    img = Base64Image.from_bytes(b"abc")
    assert ChatMessage.user("look", [img]).to_wire() == {"role": "user", "content": "look", "images": ["YWJj"]}
    with pytest.raises(ValueError):
        ChatMessage(Role.ASSISTANT, "x", (img,))


@given(st.binary())
def test_base64_round_trip(raw):
    image = Base64Image.from_bytes(raw)
    assert image.decode() == raw
    assert "\n" not in image.data
    assert image.data == base64.b64encode(raw).decode()


def test_server_config_validation():
    assert ServerConfig("http://localhost:11434/").base_url == "http://localhost:11434"
    for bad in ["localhost:11434", "ftp://host", "http://host/api", "http://host:99999"]:
        with pytest.raises(ValueError):
            ServerConfig(bad)
    with pytest.raises(ValueError):
        ServerConfig(timeout=0)


def test_server_config_env(monkeypatch):
    monkeypatch.delenv("OLLO_HOST", raising=False)
    monkeypatch.delenv("OLLO_MODEL", raising=False)
    assert ServerConfig.from_env().base_url == "http://localhost:11434"
    assert str(ServerConfig.from_env().default_model) == "llama2"
    monkeypatch.setenv("OLLO_HOST", "http://example:1234")
    monkeypatch.setenv("OLLO_MODEL", "llava")
    assert ServerConfig.from_env().base_url == "http://example:1234"
    assert str(ServerConfig.from_env().default_model) == "llava"
    cfg = ServerConfig.from_env(base_url="http://flag:1", default_model="gemma:2b")
    assert (cfg.base_url, str(cfg.default_model)) == ("http://flag:1", "gemma:2b")
