"""Mock OpenAI-compatible chat-completions API for testing the relevance filter."""

import os
import re
from typing import Optional

from fastapi import FastAPI, Header, HTTPException
from pydantic import BaseModel, Field

app = FastAPI(
    title="Mock Chat Completions API",
    description="Scores relevance prompts by token overlap, for offline tests of the relevance filter",
    version="1.0.0",
)

# Requests answered with 503 before the service starts scoring.
app.state.fail_remaining = int(os.environ.get("MOCK_LLM_FAIL_FIRST_N", "0"))
app.state.requests = 0

# --- Auth ---
API_KEY = os.environ.get("MOCK_LLM_API_KEY")

_TOKEN = re.compile(r"[^\W_]+")
_OWN_LINE = re.compile(r'^\d+:"(.*)"$')
_FOLLOWEE_LINE = re.compile(r"^(\S+?_\d+):(.*)$")


# --- Models ---
class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str
    messages: list[ChatMessage] = Field(..., min_length=1)
    temperature: Optional[float] = 0.0


class ChatChoice(BaseModel):
    index: int = 0
    message: ChatMessage
    finish_reason: str = "stop"


class ChatResponse(BaseModel):
    id: str
    object: str = "chat.completion"
    model: str
    choices: list[ChatChoice]


# --- Scoring ---
def _tokens(text: str) -> set[str]:
    return set(_TOKEN.findall(text.lower()))


def _block(prompt: str, header: str) -> list[str]:
    """Lines of the prompt block that starts with ``header``."""
    start = prompt.find(header)
    if start < 0:
        return []
    body = prompt[start + len(header) :]
    end = body.find("\n\n")
    if end >= 0:
        body = body[:end]
    return [line.strip() for line in body.strip().splitlines() if line.strip()]


def score_prompt(prompt: str) -> str:
    """Score every followee key: 2+ shared tokens -> 3, one -> 2, none -> 1."""
    own: set[str] = set()
    for line in _block(prompt, "User's Tweets:"):
        match = _OWN_LINE.match(line)
        own |= _tokens(match.group(1) if match else line)

    pairs = []
    for line in _block(prompt, "Followees' Tweets:"):
        match = _FOLLOWEE_LINE.match(line)
        if not match:
            continue
        shared = len(own & _tokens(match.group(2)))
        score = 3 if shared >= 2 else 2 if shared == 1 else 1
        pairs.append(f"({match.group(1)}:{score})")
    return ", ".join(pairs)


# --- Endpoints ---
@app.get("/health")
def health():
    return {"status": "ok", "requests": app.state.requests}


@app.post("/v1/chat/completions", response_model=ChatResponse)
def chat_completions(request: ChatRequest, authorization: Optional[str] = Header(default=None)):
    """Answer a relevance prompt in "(key:score)" form."""
    app.state.requests += 1
    if API_KEY is not None and authorization != f"Bearer {API_KEY}":
        raise HTTPException(status_code=401, detail="Invalid API key")
    if app.state.fail_remaining > 0:
        app.state.fail_remaining -= 1
        raise HTTPException(status_code=503, detail="Injected failure")

    prompt = request.messages[-1].content
    return ChatResponse(
        id=f"mock-{app.state.requests}",
        model=request.model,
        choices=[ChatChoice(message=ChatMessage(role="assistant", content=score_prompt(prompt)))],
    )
