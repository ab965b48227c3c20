"""Bounded Quotient - closed-loop probe quotients of finite POMDPs."""
