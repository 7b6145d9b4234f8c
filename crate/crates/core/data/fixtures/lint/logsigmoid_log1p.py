@triton.jit
def kernel(
    input_ptr,
    output_ptr,
    n_elements,
    BLOCK_SIZE: tl.constexpr,
):
    pid = tl.program_id(0)
    block_start = pid * BLOCK_SIZE
    offsets = block_start + tl.arange(0, BLOCK_SIZE)
    mask = offsets < n_elements

    x = tl.load(input_ptr + offsets, mask=mask)
    exp_neg_x = tl.exp(-x)
    logsigmoid = -tl.log1p(exp_neg_x)
    tl.store(output_ptr + offsets, logsigmoid, mask=mask)

def wrapper(input):
    output = torch.empty_like(input, device=input.device)
    if input.numel() == 0:
        return output
    input_contig = input.contiguous().view(-1)
    output_contig = torch.empty_like(input_contig, device=input.device)
    n_elements = input.numel()
    BLOCK_SIZE = 128
    grid = (triton.cdiv(n_elements, BLOCK_SIZE),)
    kernel[grid](
        input_contig,
        output_contig,
        n_elements,
        BLOCK_SIZE=BLOCK_SIZE,
    )
    return output_contig.view(input.shape)
