"""Aspect sentiment with syntax GCN, MambaFormer and KAN-gated fusion."""
