unsigned int mix_hash(unsigned int h, unsigned int k)
{
    unsigned int r = 0;
    r = h * 31 + k;
    r = r ^ k >> 3 ^ h;
    h += r;
    return h;
}
