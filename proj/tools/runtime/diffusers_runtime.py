#!/usr/bin/env python3
"""birdseye runtime backed by a Stable Diffusion checkpoint (diffusers + torch).

Usage:
  BIRDSEYE_RUNTIME="python3 tools/runtime/diffusers_runtime.py"
  BIRDSEYE_WEIGHTS=/path/to/weights

Weights directory layout:
  sd/                       diffusers StableDiffusionPipeline directory
  clip/                     transformers CLIPModel + CLIPProcessor (optional)
  dino/                     transformers ViTModel + image processor (optional)
  sscd.torchscript.pt       SSCD torchscript descriptor model (optional)

`--tiny-random` builds a small randomly initialised model instead of loading
weights; it exists to exercise the protocol without downloads.

Low-rank adapters wrap the to_q/to_k/to_v/to_out.0 projections of every UNet
attention block: y = W x + up(down(x)), up initialised to zero.
"""
import base64
import json
import os
import sys

import numpy as np
import torch


def pack(array):
    a = np.ascontiguousarray(np.asarray(array, dtype="<f8")).reshape(-1)
    return base64.b64encode(a.tobytes()).decode()


def unpack(text, shape=None):
    a = np.frombuffer(base64.b64decode(text), dtype="<f8")
    return a.reshape(shape) if shape is not None else a


def image_to_array(im):
    raw = np.frombuffer(base64.b64decode(im["pixels"]), dtype=np.uint8)
    return raw.reshape(im["height"], im["width"], 3)


class LoRALinear(torch.nn.Module):
    def __init__(self, base, rank, generator):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        dtype = base.weight.dtype
        self.down = torch.nn.Parameter(
            torch.randn(rank, base.in_features, generator=generator, dtype=dtype) / base.in_features ** 0.5)
        self.up = torch.nn.Parameter(torch.zeros(base.out_features, rank, dtype=dtype))
        self.initial = (self.down.detach().clone(), self.up.detach().clone())

    def forward(self, x):
        return self.base(x) + (x @ self.down.t()) @ self.up.t()


def attach_lora(unet, rank):
    generator = torch.Generator().manual_seed(0)
    layers = {}
    targets = []
    for name, module in unet.named_modules():
        for child in ("to_q", "to_k", "to_v"):
            if isinstance(getattr(module, child, None), torch.nn.Linear):
                targets.append((module, child, f"{name}.{child}"))
        to_out = getattr(module, "to_out", None)
        if isinstance(to_out, torch.nn.ModuleList) and isinstance(to_out[0], torch.nn.Linear):
            targets.append((to_out, "0", f"{name}.to_out.0"))
    for parent, child, path in targets:
        wrapped = LoRALinear(getattr(parent, child) if child != "0" else parent[0], rank, generator)
        if child == "0":
            parent[0] = wrapped
        else:
            setattr(parent, child, wrapped)
        layers[path] = wrapped
    return layers


def tiny_random_components(dtype):
    from diffusers import AutoencoderKL, DDIMScheduler, UNet2DConditionModel
    from transformers import CLIPTextConfig, CLIPTextModel

    torch.manual_seed(0)
    unet = UNet2DConditionModel(
        sample_size=8, in_channels=4, out_channels=4, layers_per_block=1,
        block_out_channels=(32, 64), down_block_types=("CrossAttnDownBlock2D", "DownBlock2D"),
        up_block_types=("UpBlock2D", "CrossAttnUpBlock2D"), cross_attention_dim=32,
        attention_head_dim=8, norm_num_groups=8)
    vae = AutoencoderKL(
        in_channels=3, out_channels=3, latent_channels=4, block_out_channels=(16, 32),
        down_block_types=("DownEncoderBlock2D",) * 2, up_block_types=("UpDecoderBlock2D",) * 2,
        norm_num_groups=8, sample_size=16)
    text = CLIPTextModel(CLIPTextConfig(
        vocab_size=1000, hidden_size=32, intermediate_size=64, num_hidden_layers=2,
        num_attention_heads=4, max_position_embeddings=16, bos_token_id=1, eos_token_id=2,
        pad_token_id=0))
    scheduler = DDIMScheduler(beta_start=0.00085, beta_end=0.012, beta_schedule="scaled_linear",
                              num_train_timesteps=1000)

    class Tokenizer:
        model_max_length = 16

        def __call__(self, text):
            ids = [1] + [sum(map(ord, w)) % 997 + 3 for w in text.lower().split()][:14]
            ids += [0] * (self.model_max_length - len(ids))
            return torch.tensor([ids])

    return unet.to(dtype), vae.to(dtype), text.to(dtype), Tokenizer(), scheduler, 16


def pretrained_components(root, dtype):
    from diffusers import StableDiffusionPipeline

    pipe = StableDiffusionPipeline.from_pretrained(os.path.join(root, "sd"), torch_dtype=dtype,
                                                   safety_checker=None)
    tok = pipe.tokenizer

    class Tokenizer:
        model_max_length = tok.model_max_length

        def __call__(self, text):
            return tok(text, padding="max_length", max_length=tok.model_max_length,
                       truncation=True, return_tensors="pt").input_ids

    size = pipe.unet.config.sample_size * pipe.vae_scale_factor
    return pipe.unet, pipe.vae, pipe.text_encoder, Tokenizer(), pipe.scheduler, size


class Runtime:
    def __init__(self, weights, rank, tiny):
        self.dtype = torch.float64 if tiny else torch.float32
        self.device = "cuda" if torch.cuda.is_available() and not tiny else "cpu"
        self.weights = weights
        if tiny:
            parts = tiny_random_components(self.dtype)
        else:
            parts = pretrained_components(weights, self.dtype)
        self.unet, self.vae, self.text, self.tokenizer, self.scheduler, self.size = parts
        for m in (self.unet, self.vae, self.text):
            m.to(self.device).eval().requires_grad_(False)
        self.rank = rank
        self.lora = attach_lora(self.unet, rank)
        self.unet.to(self.device)
        self.scale = getattr(self.vae.config, "scaling_factor", 0.18215)
        self.providers = {}
        self.tiny = tiny

    def latent_shape(self):
        f = 2 ** (len(self.vae.config.block_out_channels) - 1)
        return [self.unet.config.in_channels, self.size // f, self.size // f]

    def tensor(self, obj):
        return torch.from_numpy(unpack(obj["data"], obj["shape"]).copy()).to(self.device, self.dtype)

    def adapter_layers(self, grads=False):
        out = []
        for path, layer in self.lora.items():
            for kind in ("up", "down"):
                p = getattr(layer, kind)
                value = p.grad if grads else p.detach()
                if value is None:
                    value = torch.zeros_like(p)
                out.append({"name": f"{path}.{kind}", "shape": list(p.shape),
                            "data": pack(value.double().cpu().numpy())})
        return out

    def fingerprint(self):
        import hashlib
        h = hashlib.sha1()
        for module in (self.unet, self.vae, self.text):
            for name, p in sorted(module.state_dict().items()):
                if name.endswith((".up", ".down")):
                    continue
                h.update(name.encode())
                h.update(p.detach().cpu().contiguous().numpy().tobytes())
        return h.hexdigest()

    def predict(self, x, t, e):
        ts = torch.tensor([t], device=self.device)
        return self.unet(x[None], ts, encoder_hidden_states=e[None]).sample[0]

    def provider(self, role):
        if role in self.providers:
            return self.providers[role]
        if self.tiny:
            gen = torch.Generator().manual_seed({"clip": 1, "dino": 2, "sscd": 3}[role])
            proj = torch.randn(32, 3 * 8 * 8, generator=gen, dtype=torch.float64)
            self.providers[role] = ("tiny", proj)
        elif role == "clip":
            from transformers import CLIPModel, CLIPProcessor
            path = os.path.join(self.weights, "clip")
            self.providers[role] = ("clip", CLIPModel.from_pretrained(path).eval(),
                                    CLIPProcessor.from_pretrained(path))
        elif role == "dino":
            from transformers import AutoImageProcessor, ViTModel
            path = os.path.join(self.weights, "dino")
            self.providers[role] = ("dino", ViTModel.from_pretrained(path).eval(),
                                    AutoImageProcessor.from_pretrained(path))
        elif role == "sscd":
            path = os.path.join(self.weights, "sscd.torchscript.pt")
            self.providers[role] = ("sscd", torch.jit.load(path).eval())
        else:
            raise ValueError(f"unknown provider role '{role}'")
        return self.providers[role]

    @torch.no_grad()
    def embed_image(self, role, pixels):
        p = self.provider(role)
        if p[0] == "tiny":
            x = torch.from_numpy(pixels.copy()).double().permute(2, 0, 1)[None] / 255.0
            x = torch.nn.functional.adaptive_avg_pool2d(x, 8).reshape(-1)
            v = p[1] @ x + 1.0
        elif p[0] == "clip":
            v = p[1].get_image_features(**p[2](images=pixels, return_tensors="pt"))[0]
        elif p[0] == "dino":
            v = p[1](**p[2](images=pixels, return_tensors="pt")).last_hidden_state[0, 0]
        else:
            x = torch.from_numpy(pixels.copy()).float().permute(2, 0, 1)[None] / 255.0
            x = torch.nn.functional.interpolate(x, size=288, mode="bilinear", align_corners=False)
            mean = torch.tensor([0.485, 0.456, 0.406])[:, None, None]
            std = torch.tensor([0.229, 0.224, 0.225])[:, None, None]
            v = p[1]((x - mean) / std)[0]
        v = v.double()
        return (v / v.norm()).numpy()

    @torch.no_grad()
    def embed_text(self, role, text):
        p = self.provider(role)
        if p[0] == "tiny":
            gen = torch.Generator().manual_seed(sum(map(ord, text.lower())) + 17)
            v = torch.randn(32, generator=gen, dtype=torch.float64) + 1.0
        elif p[0] == "clip":
            v = p[1].get_text_features(**p[2](text=[text], return_tensors="pt", padding=True))[0]
        else:
            raise ValueError(f"provider '{role}' has no text tower")
        v = v.double()
        return (v / v.norm()).numpy()

    def handle(self, req):
        op = req["op"]
        if op == "encode_text":
            with torch.no_grad():
                ids = self.tokenizer(req["text"]).to(self.device)
                e = self.text(ids)[0][0]
            return {"embedding": {"shape": list(e.shape), "data": pack(e.double().cpu().numpy())}}
        if op == "encode_image":
            pixels = image_to_array(req["image"])
            if pixels.shape[0] != self.size or pixels.shape[1] != self.size:
                raise ValueError(f"expected a {self.size}x{self.size} image")
            x = torch.from_numpy(pixels.copy()).to(self.device, self.dtype).permute(2, 0, 1)[None]
            with torch.no_grad():
                z = self.vae.encode(x / 127.5 - 1.0).latent_dist.mean[0] * self.scale
            return {"latent": {"shape": list(z.shape), "data": pack(z.double().cpu().numpy())}}
        if op == "decode_latents":
            z = self.tensor(req["latent"])
            with torch.no_grad():
                x = self.vae.decode(z[None] / self.scale).sample[0]
            img = ((x.clamp(-1, 1) + 1) * 127.5).round().byte().permute(1, 2, 0).cpu().numpy()
            return {"image": {"width": img.shape[1], "height": img.shape[0],
                              "pixels": base64.b64encode(img.tobytes()).decode()}}
        if op == "predict_noise":
            with torch.no_grad():
                out = self.predict(self.tensor(req["latent"]), int(req["t"]), self.tensor(req["embedding"]))
            return {"noise": {"shape": list(out.shape), "data": pack(out.double().cpu().numpy())}}
        if op == "gradients":
            e = self.tensor(req["embedding"]).requires_grad_(bool(req["embedding_grad"]))
            for layer in self.lora.values():
                for p in (layer.up, layer.down):
                    p.grad = None
                    p.requires_grad_(bool(req["adapter_grad"]))
            eps = self.tensor(req["eps"])
            with torch.set_grad_enabled(bool(req["embedding_grad"] or req["adapter_grad"])):
                loss = torch.mean((self.predict(self.tensor(req["latent"]), int(req["t"]), e) - eps) ** 2)
                if loss.requires_grad:
                    loss.backward()
            reply = {"loss": float(loss.detach())}
            if req["embedding_grad"]:
                reply["d_embedding"] = {"shape": list(e.shape), "data": pack(e.grad.double().cpu().numpy())}
            if req["adapter_grad"]:
                reply["d_adapter"] = self.adapter_layers(grads=True)
            return reply
        if op == "get_adapter":
            return {"layers": self.adapter_layers()}
        if op == "set_adapter":
            by_name = {layer["name"]: layer for layer in req["layers"]}
            with torch.no_grad():
                for path, layer in self.lora.items():
                    for kind in ("up", "down"):
                        p = getattr(layer, kind)
                        p.copy_(torch.from_numpy(unpack(by_name[f"{path}.{kind}"]["data"], list(p.shape)).copy()))
            return {}
        if op == "reset_adapter":
            with torch.no_grad():
                for layer in self.lora.values():
                    layer.down.copy_(layer.initial[0])
                    layer.up.copy_(layer.initial[1])
            return {}
        if op == "provider_info":
            ids = {"clip": "contrastive-language-image", "dino": "self-distilled", "sscd": "copy-detection"}
            probe = np.zeros((64, 64, 3), dtype=np.uint8)
            return {"provider_id": ids[req["role"]], "dim": len(self.embed_image(req["role"], probe))}
        if op == "embed_image":
            return {"vector": pack(self.embed_image(req["role"], image_to_array(req["image"])))}
        if op == "embed_text":
            return {"vector": pack(self.embed_text(req["role"], req["text"]))}
        raise ValueError(f"unknown op '{op}'")

    def hello(self):
        return {
            "name": "stable-diffusion" + ("-tiny-random" if self.tiny else ""),
            "latent_shape": self.latent_shape(),
            "image_size": self.size,
            "tokens": self.tokenizer.model_max_length,
            "embed_dim": self.text.config.hidden_size,
            "rank": self.rank,
            "schedule": "scaled_linear",
            "alpha_bar": pack(self.scheduler.alphas_cumprod.double().numpy()),
            "fingerprint": self.fingerprint(),
        }


def main():
    tiny = "--tiny-random" in sys.argv[1:]
    runtime = None
    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        if req.get("op") == "shutdown":
            break
        try:
            if req["op"] == "hello":
                runtime = Runtime(req.get("weights", ""), int(req.get("rank", 4)), tiny)
                reply = runtime.hello()
            elif runtime is None:
                raise ValueError("hello must come first")
            else:
                reply = runtime.handle(req)
            reply["ok"] = True
        except Exception as exc:  # reported to the caller
            reply = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
