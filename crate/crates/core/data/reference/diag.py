@triton.jit
def kernel_embed(input_ptr, output_ptr, n, size, row_offset, col_offset, BLOCK_SIZE: tl.constexpr):
    pid = tl.program_id(0)
    idx = pid * BLOCK_SIZE + tl.arange(0, BLOCK_SIZE)
    mask = idx < n
    vals = tl.load(input_ptr + idx, mask=mask)
    dest = (idx + row_offset) * size + idx + col_offset
    tl.store(output_ptr + dest, vals, mask=mask)

@triton.jit
def kernel_extract(input_ptr, output_ptr, n, start, step, BLOCK_SIZE: tl.constexpr):
    pid = tl.program_id(0)
    idx = pid * BLOCK_SIZE + tl.arange(0, BLOCK_SIZE)
    mask = idx < n
    vals = tl.load(input_ptr + start + idx * step, mask=mask)
    tl.store(output_ptr + idx, vals, mask=mask)

def wrapper(input, diagonal=0):
    BLOCK_SIZE = 64
    if input.dim() == 1:
        n = input.numel()
        size = n + abs(diagonal)
        output = torch.zeros((size, size), dtype=input.dtype, device=input.device)
        if n == 0:
            return output
        row_offset = -diagonal if diagonal < 0 else 0
        col_offset = diagonal if diagonal > 0 else 0
        grid = (triton.cdiv(n, BLOCK_SIZE),)
        kernel_embed[grid](input.contiguous(), output, n, size, row_offset, col_offset, BLOCK_SIZE=BLOCK_SIZE)
        return output
    if input.dim() == 2:
        rows = input.shape[0]
        cols = input.shape[1]
        if diagonal >= 0:
            n = max(min(rows, cols - diagonal), 0)
            start = diagonal
        else:
            n = max(min(rows + diagonal, cols), 0)
            start = -diagonal * cols
        output = torch.empty(n, dtype=input.dtype, device=input.device)
        if n == 0:
            return output
        grid = (triton.cdiv(n, BLOCK_SIZE),)
        kernel_extract[grid](input.contiguous(), output, n, start, cols + 1, BLOCK_SIZE=BLOCK_SIZE)
        return output
    raise RuntimeError("diag(): Supports 1D or 2D tensors. Got " + str(input.dim()) + "D")
